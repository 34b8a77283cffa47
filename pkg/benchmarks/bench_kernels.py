"""Time the numba and numpy kernel backends side by side.

    python benchmarks/bench_kernels.py [--repeat 20] [--iters 200]

Prints per-kernel timings for both backends, then the per-iteration cost of
a short training run under each (each run in a fresh interpreter, since the
backend is fixed at import time).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from chigan import _kernels as K

TRAIN_SNIPPET = """
import time
import numpy as np
from chigan import BACKEND
from chigan.simgen import SimSpec, simulate
from chigan.trainer import TrainConfig, train
arms = simulate(SimSpec(seed=0))
train(arms, TrainConfig(max_iters=5))  # warm-up / JIT
t = time.perf_counter()
train(arms, TrainConfig(max_iters={iters}))
print(BACKEND, (time.perf_counter() - t) / {iters} * 1e3)
"""


def bench_kernels(repeat: int) -> None:
    rng = np.random.default_rng(0)
    v = rng.standard_normal((256, 64)) * 4
    g = rng.standard_normal((256, 64))
    y = np.tanh(v)
    w = rng.random(8000)
    cdf = np.cumsum(w / w.sum())
    u = rng.random(2000)
    cases = {
        "softplus (256x64)": lambda impl: impl.softplus(v),
        "softplus_backward (256x64)": lambda impl: impl.softplus_backward(v, g),
        "tanh_backward (256x64)": lambda impl: impl.tanh_backward(y, g),
        "all_finite (256x64)": lambda impl: impl.all_finite(v),
        "sum_and_sumsq (8000)": lambda impl: impl.sum_and_sumsq(w),
        "inverse_cdf (8000 -> 2000)": lambda impl: impl.inverse_cdf(cdf, u),
    }
    impls = [K.numpy_impl] + ([K.numba_impl] if K.numba_impl is not None else [])
    for impl in impls:
        for fn in cases.values():
            fn(impl)  # compile
    print(f"{'kernel':<28}" + "".join(f"{impl.name + ' (us)':>14}" for impl in impls))
    for name, fn in cases.items():
        cells = []
        for impl in impls:
            best = min(timeit.repeat(lambda: fn(impl), number=200, repeat=repeat)) / 200
            cells.append(f"{best * 1e6:>14.2f}")
        print(f"{name:<28}" + "".join(cells))


def bench_training(iters: int) -> None:
    print(f"\ntraining, default SimSpec, ms/iteration over {iters} iterations")
    for flag in ("1", "0"):
        env = dict(os.environ, CHIGAN_DISABLE_JIT=flag)
        out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(iters=iters)],
                             env=env, capture_output=True, text=True, check=True)
        name, ms = out.stdout.split()
        print(f"  {name:<8}{float(ms):8.2f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--iters", type=int, default=200)
    args = ap.parse_args()
    bench_kernels(args.repeat)
    bench_training(args.iters)


if __name__ == "__main__":
    main()
