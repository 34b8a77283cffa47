"""Synthetic two-arm study with a shared latent subpopulation.

Three Gaussian subpopulations A, B, C are drawn from a normal-Wishart prior.
Arm 1 mixes A and B, arm 2 mixes A and C in equal parts, so A plays the role
of a natural experiment. Outcomes depend only on (arm, subpopulation): the
mixture ATE is 50 and the ATE over the shared subpopulation is 70.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohort import StudyArm
from .trainer import derive_seed

_SUBPOP_PARAMS, _ARM_DRAWS, _OUTCOMES = 11, 12, 13
SUBPOPS = ("A", "B", "C")
ARM_SUBPOPS = (("A", "B"), ("A", "C"))

DEFAULT_OUTCOME_MEANS = {
    ("1", "A"): 60.0,
    ("1", "B"): 40.0,
    ("2", "A"): -10.0,
    ("2", "C"): 10.0,
}


@dataclass
class SimSpec:
    d: int = 10
    n_sub: int = 2000
    mu0: np.ndarray | None = None
    kappa0: float = 0.1
    nu0: float | None = None
    psi: np.ndarray | None = None
    outcome_means: dict = field(default_factory=lambda: dict(DEFAULT_OUTCOME_MEANS))
    outcome_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        d = self.d
        if d < 1 or self.n_sub < 1:
            raise ValueError("d and n_sub must be positive")
        self.mu0 = np.zeros(d) if self.mu0 is None else np.asarray(self.mu0, dtype=np.float64)
        self.psi = np.eye(d) if self.psi is None else np.asarray(self.psi, dtype=np.float64)
        if self.nu0 is None:
            self.nu0 = d + 2.0
        if self.mu0.shape != (d,) or self.psi.shape != (d, d):
            raise ValueError("mu0 must have length d and psi must be d x d")
        if not self.nu0 > d - 1:
            raise ValueError(f"nu0 must exceed d - 1 = {d - 1}, got {self.nu0}")
        if not self.kappa0 > 0 or not self.outcome_std > 0:
            raise ValueError("kappa0 and outcome_std must be positive")
        if not np.allclose(self.psi, self.psi.T):
            raise ValueError("psi must be symmetric")
        try:
            np.linalg.cholesky(self.psi)
        except np.linalg.LinAlgError:
            raise ValueError("psi must be positive definite") from None

    def metadata(self) -> dict:
        return {
            "d": self.d,
            "n_sub": self.n_sub,
            "mu0": self.mu0.tolist(),
            "kappa0": self.kappa0,
            "nu0": self.nu0,
            "psi": self.psi.tolist(),
            "outcome_means": {f"{p}{s}": v for (p, s), v in sorted(self.outcome_means.items())},
            "outcome_std": self.outcome_std,
            "seed": self.seed,
        }


def target_ates(spec: SimSpec) -> dict[str, float]:
    m = spec.outcome_means
    mixture = 0.5 * (m[("1", "A")] + m[("1", "B")]) - 0.5 * (m[("2", "A")] + m[("2", "C")])
    overlap = m[("1", "A")] - m[("2", "A")]
    return {"mixture": mixture, "overlap": overlap}


def sample_wishart(nu: float, psi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Wishart(nu, psi) draw via the Bartlett decomposition."""
    d = psi.shape[0]
    L = np.linalg.cholesky(psi)
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(rng.chisquare(nu - np.arange(d)))
    tril = np.tril_indices(d, -1)
    A[tril] = rng.standard_normal(len(tril[0]))
    LA = L @ A
    return LA @ LA.T


def sample_normal_wishart(spec: SimSpec, subpop: str, seed: int | None = None):
    """(mean, covariance) of one subpopulation.

    Precision ~ Wishart(nu0, psi), mean ~ N(mu0, (kappa0 * precision)^-1).
    """
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(derive_seed(seed, _SUBPOP_PARAMS, subpop))
    jitter = 0.0
    for _ in range(4):
        prec = sample_wishart(spec.nu0, spec.psi, rng)
        try:
            cov = np.linalg.inv(prec + jitter * np.eye(spec.d))
            cov = 0.5 * (cov + cov.T)
            np.linalg.cholesky(cov)
            mean_chol = np.linalg.cholesky(cov / spec.kappa0)
        except np.linalg.LinAlgError:
            jitter = 1e-8 if jitter == 0.0 else jitter * 10
            continue
        mean = spec.mu0 + mean_chol @ rng.standard_normal(spec.d)
        return mean, cov
    raise np.linalg.LinAlgError(f"subpopulation {subpop}: no positive-definite draw after 3 retries")


def build_populations(spec: SimSpec) -> tuple[StudyArm, StudyArm]:
    params = {s: sample_normal_wishart(spec, s) for s in SUBPOPS}
    arms = []
    for k, subs in enumerate(ARM_SUBPOPS, start=1):
        rng = np.random.default_rng(derive_seed(spec.seed, _ARM_DRAWS, str(k)))
        X, labels = [], []
        for s in subs:
            mean, cov = params[s]
            X.append(rng.multivariate_normal(mean, cov, size=spec.n_sub, method="cholesky"))
            labels += [s] * spec.n_sub
        arms.append(StudyArm(np.concatenate(X), labels=np.array(labels), arm_id=str(k),
                             unit_ids=np.array([f"{k}-{i}" for i in range(len(labels))])))
    return arms[0], arms[1]


def subpopulation_params(spec: SimSpec) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    return {s: sample_normal_wishart(spec, s) for s in SUBPOPS}


def simulate_outcomes(arms, spec: SimSpec) -> list[StudyArm]:
    """Draw one outcome per unit from N(mean[(population, label)], outcome_std^2)."""
    out = []
    for k, arm in enumerate(arms, start=1):
        if arm.labels is None:
            raise ValueError(f"arm {arm.arm_id} has no subpopulation labels")
        rng = np.random.default_rng(derive_seed(spec.seed, _OUTCOMES, str(k)))
        try:
            means = np.array([spec.outcome_means[(str(k), lab)] for lab in arm.labels])
        except KeyError as exc:
            raise ValueError(f"no outcome mean for population {k}, subpopulation {exc.args[0][1]!r}") from None
        y = means + spec.outcome_std * rng.standard_normal(arm.n)
        out.append(StudyArm(arm.features, y, arm.labels, arm.arm_id, arm.unit_ids))
    return out


def simulate(spec: SimSpec | None = None) -> list[StudyArm]:
    spec = spec or SimSpec()
    return simulate_outcomes(build_populations(spec), spec)


_SHIFTED = 14


def shifted_mixture(d: int = 10, n_sub: int = 2000, shift: float = 3.0, seed: int = 0) -> list[StudyArm]:
    """Confounded two-cohort data for balance checks.

    Each arm is an equal mix of a shared N(0, I) component and its own
    N(shift * u_k, I) component, with u_1, u_2 random unit directions. The
    arm-specific halves push covariate means apart, so unweighted cohorts are
    badly imbalanced while the shared half supports a balanced comparison.
    Labels are "A" for the shared component and "B" / "C" for the others.
    """
    if d < 1 or n_sub < 1 or not shift >= 0:
        raise ValueError("d and n_sub must be positive and shift nonnegative")
    rng = np.random.default_rng(derive_seed(seed, _SHIFTED))
    u = rng.standard_normal((2, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    arms = []
    for k, own in enumerate(("B", "C")):
        X = np.vstack([rng.standard_normal((n_sub, d)), shift * u[k] + rng.standard_normal((n_sub, d))])
        labels = np.array(["A"] * n_sub + [own] * n_sub)
        arms.append(StudyArm(X, labels=labels, arm_id=str(k + 1),
                             unit_ids=np.array([f"{k + 1}-{i}" for i in range(2 * n_sub)])))
    return arms
