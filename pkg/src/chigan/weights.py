"""Importance weights read off trained critics.

At the tight bound ``t = 2 (p/q - 1)``, so the likelihood ratio of a unit
is ``gf(V(x)) / 2 + 1 = softplus(V(x)) / 2``. Ratios are self-normalized per
arm before any downstream use.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .cohort import DataValidationError, StudyArm, fmt
from .nets import gf_transform


class DegenerateWeightsError(ValueError):
    def __init__(self, msg: str = "degenerate weights: no overlap detected"):
        super().__init__(msg)


@dataclass
class WeightVector:
    arm: str
    raw: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return self.weights.shape[0]


def raw_ratios(model, arm: StudyArm) -> np.ndarray:
    """Unnormalized ``p/q_a`` for each unit of ``arm`` (raw feature scale)."""
    if arm.dim != model.stats.mean.shape[0]:
        raise ValueError(f"arm {arm.arm_id} has {arm.dim} features, model expects {model.stats.mean.shape[0]}")
    v = model.discriminator_for(arm).raw(model.stats.apply(arm.features))
    return gf_transform(v) / 2.0 + 1.0


def normalize(ratios, arm: str = "0") -> WeightVector:
    r = np.asarray(ratios, dtype=np.float64).ravel()
    if r.size == 0 or np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("ratios must be a nonempty vector of finite nonnegative values")
    c = r.sum()
    if not c > 0:
        raise DegenerateWeightsError()
    return WeightVector(str(arm), r, r / c)


def extract_weights(model, arms: Sequence[StudyArm]) -> list[WeightVector]:
    return [normalize(raw_ratios(model, a), a.arm_id) for a in arms]


def sir_resample(arm: StudyArm, w: WeightVector, m: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial resampling: returns (row indices, resampled feature rows)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if len(w) != arm.n:
        raise DataValidationError(f"{len(w)} weights for {arm.n} units")
    total = w.weights.sum()
    if not total > 0:
        raise DegenerateWeightsError()
    cdf = np.cumsum(w.weights / total)
    u = np.random.default_rng(seed).random(m)
    idx = K.inverse_cdf(cdf, u)
    return idx, arm.features[idx]


def write_weights_csv(path, arm: StudyArm, w: WeightVector, method: str | None = None) -> None:
    """Columns ``unit_id, arm, raw_ratio, weight`` (+ ``method``), in input row order."""
    if len(w) != arm.n:
        raise DataValidationError(f"{len(w)} weights for {arm.n} units")
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    header = ["unit_id", "arm", "raw_ratio", "weight"]
    if method is not None:
        header.append("method")
    out.writerow(header)
    for i in range(arm.n):
        row = [arm.unit_ids[i], w.arm, fmt(w.raw[i]), fmt(w.weights[i])]
        if method is not None:
            row.append(method)
        out.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_weights_csv(path) -> tuple[np.ndarray, WeightVector]:
    """Returns (unit ids, weights) from a weights CSV."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataValidationError(f"{path}: no weight rows")
    try:
        ids = np.array([r["unit_id"] for r in rows])
        raw = np.array([float(r["raw_ratio"]) for r in rows])
        wts = np.array([float(r["weight"]) for r in rows])
        arm = rows[0]["arm"]
    except (KeyError, ValueError) as exc:
        raise DataValidationError(f"{path}: malformed weights file ({exc})") from None
    return ids, WeightVector(arm, raw, wts)
