"""Effect, overlap and balance diagnostics for weighted cohorts."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .cohort import DataValidationError, fmt
from .weights import DegenerateWeightsError, WeightVector


def _as_weights(w) -> np.ndarray:
    return np.asarray(w.weights if isinstance(w, WeightVector) else w, dtype=np.float64).ravel()


@dataclass
class EffectReport:
    ate: float
    means: list[float]
    ess: list[float]
    method: str = ""

    @property
    def total_ess(self) -> float:
        return float(np.sum(self.ess))


@dataclass
class BalanceReport:
    per_feature: np.ndarray
    mean: float
    skipped: list[int] = field(default_factory=list)
    method: str = ""


def weighted_mean(y, w) -> float:
    y = np.asarray(y, dtype=np.float64).ravel()
    w = _as_weights(w)
    if y.shape != w.shape:
        raise DataValidationError(f"{y.size} outcomes but {w.size} weights")
    return float(w @ y)


def weighted_ate(y1, w1, y2, w2) -> float:
    """``sum(w1 * y1) - sum(w2 * y2)`` for per-arm normalized weights."""
    return weighted_mean(y1, w1) - weighted_mean(y2, w2)


def kish_ess(w) -> float:
    """Kish effective sample size ``(sum w)^2 / sum w^2``."""
    w = _as_weights(w)
    top = w.max() if w.size else 0.0
    if top > 0:
        w = w / top  # scale-free; keeps w^2 out of the subnormal range
    s, s2 = K.sum_and_sumsq(w)
    if not s2 > 0:
        raise DegenerateWeightsError("effective sample size undefined: all weights are zero")
    return s * s / s2


def effect_report(y1, w1, y2, w2, method: str = "") -> EffectReport:
    m1, m2 = weighted_mean(y1, w1), weighted_mean(y2, w2)
    return EffectReport(m1 - m2, [m1, m2], [kish_ess(w1), kish_ess(w2)], method)


def asdm(X1, w1, X2, w2, method: str = "") -> BalanceReport:
    """Absolute standardized difference of weighted means, per feature.

    The denominator is ``sqrt((s1^2 + s2^2) / 2)`` from the unweighted per-arm
    variances, so it stays fixed across weighting methods. Features with a
    zero denominator are reported as NaN, listed in ``skipped`` and left out
    of the mean.
    """
    X1 = np.asarray(X1, dtype=np.float64)
    X2 = np.asarray(X2, dtype=np.float64)
    if X1.ndim != 2 or X2.ndim != 2 or X1.shape[1] != X2.shape[1]:
        raise DataValidationError(f"feature shapes differ: {X1.shape} vs {X2.shape}")
    w1, w2 = _as_weights(w1), _as_weights(w2)
    if w1.size != X1.shape[0] or w2.size != X2.shape[0]:
        raise DataValidationError("weights and cohorts have different row counts")
    mu1 = w1 @ X1 / w1.sum()
    mu2 = w2 @ X2 / w2.sum()
    pooled = np.sqrt(0.5 * (X1.var(axis=0, ddof=1) + X2.var(axis=0, ddof=1)))
    ok = pooled > 0
    per = np.full(X1.shape[1], np.nan)
    per[ok] = np.abs(mu1[ok] - mu2[ok]) / pooled[ok]
    skipped = [int(j) for j in np.flatnonzero(~ok)]
    mean = float(per[ok].mean()) if ok.any() else float("nan")
    return BalanceReport(per, mean, skipped, method)


def chi2_from_ratios(ratios) -> float:
    """Monte Carlo chi^2(p || q) = E_q[(p/q)^2] - 1 from ratios at q-samples."""
    r = np.asarray(ratios, dtype=np.float64).ravel()
    if r.size == 0:
        raise ValueError("no ratios given")
    return float(np.mean(r * r) - 1.0)


class InfiniteDivergenceError(ValueError):
    def __init__(self):
        super().__init__("chi-squared divergence infinite")


def analytic_gaussian_chi2(p: tuple[float, float], q: tuple[float, float]) -> float:
    """Closed-form chi^2(N(mp, vp) || N(mq, vq)) for 1-D Gaussians given as (mean, variance).

    Finite only when ``2/vp - 1/vq > 0``.
    """
    mp, vp = map(float, p)
    mq, vq = map(float, q)
    if vp <= 0 or vq <= 0:
        raise ValueError("variances must be positive")
    a = 1.0 / vp - 0.5 / vq
    if not a > 0:
        raise InfiniteDivergenceError()
    b = 2.0 * mp / vp - mq / vq
    c = mp * mp / vp - 0.5 * mq * mq / vq
    # integral of p^2/q is a Gaussian integral of exp(-a x^2 + b x - c)
    log_int = 0.5 * np.log(vq) - np.log(vp) - 0.5 * np.log(2.0 * a) + b * b / (4.0 * a) - c
    return float(np.expm1(log_int))


def is_variance_relation_check(ratios, n: int, n_boot: int = 200, seed: int = 0) -> tuple[float, float]:
    """Compare the spread of IS estimates of a constant with chi^2 / n.

    lhs is the variance, over ``n_boot`` bootstrap replicates of size ``n``
    drawn from ``ratios``, of the importance-sampling estimate of the
    constant estimand 1; rhs is ``chi2_from_ratios(ratios) / n``.
    """
    r = np.asarray(ratios, dtype=np.float64).ravel()
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, r.size, size=(n_boot, n))
    est = r[idx].mean(axis=1)
    return float(est.var(ddof=1)), chi2_from_ratios(r) / n


# --- serialization ----------------------------------------------------------


def write_effect_csv(path, reports: list[EffectReport]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "ate", "mean_arm1", "mean_arm2", "ess_arm1", "ess_arm2", "ess_total"])
    for r in reports:
        w.writerow([r.method, fmt(r.ate), fmt(r.means[0]), fmt(r.means[1]),
                    fmt(r.ess[0]), fmt(r.ess[1]), fmt(r.total_ess)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_balance_csv(path, reports: list[BalanceReport], feature_names: list[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "mean_asdm", *feature_names, "skipped"])
    for r in reports:
        w.writerow([r.method, fmt(r.mean), *[fmt(v) for v in r.per_feature],
                    ";".join(feature_names[j] for j in r.skipped)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def format_table(effects: list[EffectReport], balances: list[BalanceReport]) -> str:
    """Plain-text summary: method, ATE, ESS, mean ASDM."""
    rows = {}
    for e in effects:
        rows.setdefault(e.method, {})["ate"] = f"{e.ate:.2f}"
        rows[e.method]["ess"] = f"{e.total_ess:.0f}"
    for b in balances:
        rows.setdefault(b.method, {})["asdm"] = f"{b.mean:.4f}"
    width = max([len("Weighting Method")] + [len(m) for m in rows])
    lines = [f"{'Weighting Method':<{width}}  {'ATE':>10}  {'ESS':>8}  {'ASDM':>8}",
             "-" * (width + 32)]
    for m, r in rows.items():
        lines.append(f"{m:<{width}}  {r.get('ate', '-'):>10}  {r.get('ess', '-'):>8}  {r.get('asdm', '-'):>8}")
    return "\n".join(lines) + "\n"
