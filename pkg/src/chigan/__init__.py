"""Counterfactual chi-GAN.

Learns a target distribution that minimizes the summed Pearson chi^2
divergence to every arm of an observational study, and reads per-unit
importance weights off the adversarial critics.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .cohort import StudyArm, read_cohort_csv, write_cohort_csv
from .estimators import asdm, chi2_from_ratios, kish_ess, weighted_ate
from .simgen import SimSpec, simulate
from .trainer import TrainConfig, TrainedModel, objective_estimate, train
from .weights import WeightVector, extract_weights, normalize, raw_ratios, sir_resample

__all__ = [
    "BACKEND",
    "SimSpec",
    "StudyArm",
    "TrainConfig",
    "TrainedModel",
    "WeightVector",
    "asdm",
    "chi2_from_ratios",
    "extract_weights",
    "kish_ess",
    "normalize",
    "objective_estimate",
    "raw_ratios",
    "read_cohort_csv",
    "simulate",
    "sir_resample",
    "train",
    "weighted_ate",
    "write_cohort_csv",
]
