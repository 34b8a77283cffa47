"""Elementwise hot kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports cleanly and the environment
variable ``CHIGAN_DISABLE_JIT`` is unset (or ``0``). Both implementations
are always importable as ``numpy_impl`` / ``numba_impl`` so tests and the
benchmark can compare them side by side.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

__all__ = [
    "BACKEND",
    "numpy_impl",
    "numba_impl",
    "softplus",
    "softplus_backward",
    "tanh_backward",
    "sum_and_sumsq",
    "inverse_cdf",
    "all_finite",
]


# --- pure numpy ------------------------------------------------------------


def _np_softplus(v):
    return np.log1p(np.exp(-np.abs(v))) + np.maximum(v, 0.0)


def _np_softplus_backward(v, g):
    # sigmoid(v) * g, evaluated without overflow on either tail
    e = np.exp(-np.abs(v))
    sig = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return g * sig


def _np_tanh_backward(y, g):
    return g * (1.0 - y * y)


def _np_sum_and_sumsq(w):
    return float(np.sum(w)), float(np.sum(w * w))


def _np_all_finite(x):
    return bool(np.isfinite(x).all())


def _np_inverse_cdf(cdf, u):
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, cdf.shape[0] - 1)


numpy_impl = SimpleNamespace(
    softplus=_np_softplus,
    softplus_backward=_np_softplus_backward,
    tanh_backward=_np_tanh_backward,
    sum_and_sumsq=_np_sum_and_sumsq,
    inverse_cdf=_np_inverse_cdf,
    all_finite=_np_all_finite,
    name="numpy",
)


# --- numba -----------------------------------------------------------------

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


if _HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _tanh_backward_flat(y, g, out):
        for i in range(y.shape[0]):
            out[i] = g[i] * (1.0 - y[i] * y[i])

    @njit(cache=True, nogil=True)
    def _sum_and_sumsq_flat(w):
        s = 0.0
        s2 = 0.0
        for i in range(w.shape[0]):
            s += w[i]
            s2 += w[i] * w[i]
        return s, s2

    @njit(cache=True, nogil=True)
    def _inverse_cdf_flat(cdf, u, out):
        n = cdf.shape[0]
        for k in range(u.shape[0]):
            lo = 0
            hi = n
            # first index with cdf[idx] > u[k]
            while lo < hi:
                mid = (lo + hi) // 2
                if cdf[mid] <= u[k]:
                    lo = mid + 1
                else:
                    hi = mid
            out[k] = lo if lo < n else n - 1

    def _flat(a):
        return np.ascontiguousarray(a, dtype=np.float64).reshape(-1)

    def _nb_tanh_backward(y, g):
        y = np.asarray(y, dtype=np.float64)
        out = np.empty(y.size)
        _tanh_backward_flat(_flat(y), _flat(g), out)
        return out.reshape(y.shape)

    def _nb_sum_and_sumsq(w):
        s, s2 = _sum_and_sumsq_flat(_flat(w))
        return float(s), float(s2)

    def _nb_inverse_cdf(cdf, u):
        u = _flat(u)
        out = np.empty(u.shape[0], dtype=np.int64)
        _inverse_cdf_flat(_flat(cdf), u, out)
        return out

    numba_impl = SimpleNamespace(
        # numpy's SIMD exp/log1p beat scalar libm calls from a numba loop,
        # and np.isfinite beats an early-exit loop, so those stay on numpy
        softplus=_np_softplus,
        softplus_backward=_np_softplus_backward,
        tanh_backward=_nb_tanh_backward,
        sum_and_sumsq=_nb_sum_and_sumsq,
        inverse_cdf=_nb_inverse_cdf,
        all_finite=_np_all_finite,
        name="numba",
    )
else:  # pragma: no cover
    numba_impl = None


def _jit_disabled() -> bool:
    return os.environ.get("CHIGAN_DISABLE_JIT", "0").strip().lower() not in ("", "0", "false", "no")


_active = numpy_impl if (numba_impl is None or _jit_disabled()) else numba_impl
BACKEND: str = _active.name

softplus = _active.softplus
softplus_backward = _active.softplus_backward
tanh_backward = _active.tanh_backward
sum_and_sumsq = _active.sum_and_sumsq
inverse_cdf = _active.inverse_cdf
all_finite = _active.all_finite
