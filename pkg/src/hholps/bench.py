"""Microbenchmark comparing the numpy and numba kernel implementations.

Run as ``python -m hholps.bench``.  Sizes default to what a degree-2
assembly sees per cell; jitted kernels are warmed up before timing so
compilation is not measured.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from .basis import monomial_exponents
from .kernels import BACKEND, implementations


def _workload(n_points: int, degree: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    expo = monomial_exponents(degree).astype(np.int64)
    xi = rng.uniform(-0.5, 0.5, n_points)
    eta = rng.uniform(-0.5, 0.5, n_points)
    vals = rng.standard_normal((n_points, expo.shape[0]))
    weights = rng.uniform(0.1, 1.0, n_points)
    return {
        "monomial_values": (xi, eta, expo),
        "monomial_gradients": (xi, eta, expo),
        "weighted_gram": (np.ascontiguousarray(vals), np.ascontiguousarray(vals), weights),
    }


def _time(fn, args, inner: int, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / inner)
    return best


def run(n_points: int, degree: int, inner: int, repeat: int) -> list:
    impls = implementations()
    args = _workload(n_points, degree)
    rows = []
    for kernel, call_args in args.items():
        timings = {}
        for name, table in impls.items():
            fn = table[kernel]
            fn(*call_args)  # warm up (jit compilation, caches)
            timings[name] = _time(fn, call_args, inner, repeat)
        rows.append((kernel, timings))
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=100, help="quadrature points per cell")
    parser.add_argument("--degree", type=int, default=3, help="polynomial degree of the table")
    parser.add_argument("--inner", type=int, default=2000, help="calls per timing sample")
    parser.add_argument("--repeat", type=int, default=5, help="timing samples, best kept")
    args = parser.parse_args(argv)

    rows = run(args.points, args.degree, args.inner, args.repeat)
    have_numba = "numba" in implementations()
    print(f"active backend: {BACKEND}" + ("" if have_numba else " (numba not installed)"))
    header = f"{'kernel':<20} {'numpy [us]':>12}"
    if have_numba:
        header += f" {'numba [us]':>12} {'speedup':>9}"
    print(header)
    for kernel, timings in rows:
        line = f"{kernel:<20} {timings['numpy'] * 1e6:>12.2f}"
        if have_numba:
            ratio = timings["numpy"] / timings["numba"] if timings["numba"] > 0 else float("inf")
            line += f" {timings['numba'] * 1e6:>12.2f} {ratio:>8.2f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
