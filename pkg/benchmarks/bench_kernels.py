"""Benchmark the hot raster kernels: numba @njit vs the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--repeats 200]

The numba path is what training uses by default; DARPSBIR_NUMBA=0 forces the
fallback at import time. Here both implementations are timed side by side in
one process (compilation happens once, outside the timed region).
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from darpsbir import kernels


def time_fn(fn, repeats):
    best = np.inf
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    impls = kernels.implementations()
    if "numba" not in impls:
        print("numba unavailable or disabled; nothing to compare")
        return

    # workloads sized like one training episode step
    strokes = [(rng.integers(0, 64, 12).astype(np.int64),
                rng.integers(0, 64, 12).astype(np.int64)) for _ in range(8)]
    sketch = (rng.random((64, 64)) < 0.08).astype(np.float32)
    dense = rng.random((64, 64)).astype(np.float32)

    cases = [
        ("draw_polyline (8 strokes x 12 pts)", "draw_polyline", lambda f: [
            f(np.zeros((64, 64), np.float32), c, r) for c, r in strokes]),
        ("dilate r=1 (64x64)", "dilate", lambda f: f(sketch, 1)),
        ("dilate r=2 (64x64)", "dilate", lambda f: f(sketch, 2)),
        ("retina 8->8 (crop)", "retina_patch", lambda f: f(dense, 32, 20, 8, 8)),
        ("retina 32->8 (area avg)", "retina_patch", lambda f: f(dense, 32, 20, 32, 8)),
    ]

    # trigger numba compilation outside the timings
    for _, kernel, runner in cases:
        runner(impls["numba"][kernel])

    print(f"{'case':36s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for label, kernel, runner in cases:
        t_np = time_fn(lambda: runner(impls["numpy"][kernel]), args.repeats)
        t_nb = time_fn(lambda: runner(impls["numba"][kernel]), args.repeats)
        print(f"{label:36s} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
