#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the two hot kernels (2-D cross-correlation and the directional
recurrent scan) on training-representative shapes, forward and backward.
Run after `pip install -e .` so the extension is built:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from dscshadow.kernels import _numpy as kpy

try:
    from dscshadow.kernels import _native as knat
except ImportError:
    knat = None

CONV_CASES = [
    # (label, input shape, kernel shape, padding)
    ("conv3x3 64x64 c3->c8", (1, 3, 64, 64), (8, 3, 3, 3), 1),
    ("conv3x3 32x32 c16->c16", (1, 16, 32, 32), (16, 16, 3, 3), 1),
    ("conv1x1 64x64 c112->c16 (MLIF)", (1, 112, 64, 64), (16, 112, 1, 1), 0),
]

SCAN_CASES = [
    ("scan 32x32 c16", (1, 16, 32, 32)),
    ("scan 16x16 c32", (1, 32, 16, 16)),
]


def timeit(fn, min_time=0.3):
    fn()  # warm up
    n, t0 = 0, time.perf_counter()
    while time.perf_counter() - t0 < min_time:
        fn()
        n += 1
    return (time.perf_counter() - t0) / n


def bench(impl):
    rng = np.random.default_rng(0)
    rows = []
    for label, xs, ks, pad in CONV_CASES:
        x = rng.normal(size=xs)
        k = rng.normal(size=ks)
        gy = rng.normal(size=impl.conv2d_forward(x, k, pad).shape)
        rows.append((label + " fwd", timeit(lambda: impl.conv2d_forward(x, k, pad))))
        rows.append((label + " bwd", timeit(lambda: impl.conv2d_backward(x, k, gy, pad))))
    for label, xs in SCAN_CASES:
        x = rng.normal(size=xs)
        a = np.eye(xs[1]) + rng.normal(size=(xs[1], xs[1])) * 0.05
        h = impl.scan_forward(x, a)
        gh = rng.normal(size=xs)
        rows.append((label + " fwd", timeit(lambda: impl.scan_forward(x, a))))
        rows.append((label + " bwd", timeit(lambda: impl.scan_backward(x, h, a, gh))))
    return rows


def main():
    py = dict(bench(kpy))
    nat = dict(bench(knat)) if knat is not None else {}
    width = max(len(k) for k in py)
    print(f"{'kernel':<{width}}  {'python':>10}  {'native':>10}  {'speedup':>8}")
    for label, t_py in py.items():
        if nat:
            t_n = nat[label]
            print(f"{label:<{width}}  {t_py * 1e3:>8.3f}ms  {t_n * 1e3:>8.3f}ms  "
                  f"{t_py / t_n:>7.2f}x")
        else:
            print(f"{label:<{width}}  {t_py * 1e3:>8.3f}ms  {'n/a':>10}  {'n/a':>8}")
    if knat is None:
        print("\nnative backend not built; install with `pip install -e .`")


if __name__ == "__main__":
    main()
