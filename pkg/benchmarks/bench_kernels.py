"""Numba vs numpy timings for the hot kernels.

Run: python benchmarks/bench_kernels.py [--repeat N]

Both backends are called directly (``*_numba`` / ``*_numpy``), so the env
flag does not matter here. Outputs are checked for equality before timing;
the first numba call (compilation or cache load) is excluded.
"""

import argparse
import time

import numpy as np

from pasr import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    lat = rng.uniform(-90, 90, 200_000)
    lon = rng.uniform(-180, 180, 200_000)
    yield "geohash 200k x 12", (lambda f: f(lat, lon, 12)), kernels.geohash_digits_numba, kernels.geohash_digits_numpy

    klat = 40.5 + 0.5 * rng.random(1500)
    klon = -74.3 + 0.7 * rng.random(1500)
    yield "knn brute 1500 pts, K=50", (lambda f: f(klat, klon, 50)), kernels.knn_brute_numba, kernels.knn_brute_numpy

    cum = np.cumsum(rng.random((2000, 200)), axis=1)
    rows = rng.integers(0, 2000, 500_000)
    u = rng.random(500_000)
    yield "cumulative draw 500k", (lambda f: f(cum, rows, u)), kernels.cumulative_draw_numba, kernels.cumulative_draw_numpy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for name, call, fast, slow in cases(rng):
        a, b = call(fast), call(slow)  # warm-up, and both must agree
        assert np.array_equal(a, b), name
        tn = best_of(lambda: call(fast), args.repeat)
        tp = best_of(lambda: call(slow), args.repeat)
        print(f"{name:28s} {tn:10.4f} {tp:10.4f} {tp / tn:7.1f}x")


if __name__ == "__main__":
    main()
