#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-Python numeric kernels.

Both kernel modules expose the same three scalar-heavy routines; this script
feeds bit-identical, precomputed inputs to each and prints per-call times and
the speedup.  Results are also cross-checked so a divergence between the
implementations shows up here as well as in the test suite.

Run:

    python3 benchmarks/bench_backends.py
"""
from __future__ import annotations

import time

import numpy as np

from raremeta.numerics import _pykernels, first_primes, _permuted_scaled_cholesky

try:
    from raremeta.numerics import _ckernels
except ImportError:  # extension not built in this environment
    _ckernels = None

REPEAT = 5


def _best_of(fn, *args, calls: int) -> tuple[float, object]:
    result = None
    best = float("inf")
    for _ in range(REPEAT):
        t0 = time.perf_counter()
        for _ in range(calls):
            result = fn(*args)
        best = min(best, (time.perf_counter() - t0) / calls)
    return best, result


def _workloads():
    rng = np.random.default_rng(20260825)

    # Mixture-of-chi-squares tail: a dozen spread-out weights, far tail.
    lam = np.sort(rng.uniform(0.05, 2.5, 12))[::-1].copy()
    yield (
        "davies_tail (12 weights)",
        "davies_tail",
        (lam, float(lam.sum() * 3.0), 1e-9, 1_000_000),
        40,
    )

    # MVN rectangle lattice pass: 8 dimensions, 10 shifts, 16384 points.
    dim = 8
    a_mat = rng.standard_normal((dim, dim))
    cov = a_mat @ a_mat.T + dim * np.eye(dim)
    scale = np.sqrt(np.diag(cov))
    corr = cov / np.outer(scale, scale)
    lower = np.full(dim, -1.5)
    upper = rng.uniform(0.5, 2.0, dim)
    ch, az, bz = _permuted_scaled_cholesky(corr, lower, upper)
    q = np.sqrt(first_primes(dim).astype(np.float64))
    shifts = rng.random((10, dim))
    yield (
        "genz_lattice (dim 8, 10x16384 pts)",
        "genz_lattice",
        (ch, az, bz, q, shifts, 16384),
        3,
    )

    # Exact Hardy-Weinberg p-value at biobank-scale counts.
    yield ("hwe_exact (n=5000)", "hwe_exact", (480, 4490, 30), 20)


def main() -> None:
    if _ckernels is None:
        print("compiled extension unavailable; timing pure Python only")
    header = f"{'kernel':38s} {'compiled':>12s} {'python':>12s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for label, name, args, calls in _workloads():
        py_t, py_res = _best_of(getattr(_pykernels, name), *args, calls=calls)
        if _ckernels is None:
            print(f"{label:38s} {'-':>12s} {py_t * 1e3:10.3f}ms {'-':>9s}")
            continue
        c_t, c_res = _best_of(getattr(_ckernels, name), *args, calls=calls)
        same = np.allclose(
            np.atleast_1d(np.asarray(c_res, float)),
            np.atleast_1d(np.asarray(py_res, float)),
            rtol=1e-12,
            atol=1e-14,
        )
        flag = "" if same else "  RESULTS DIFFER"
        print(
            f"{label:38s} {c_t * 1e3:10.3f}ms {py_t * 1e3:10.3f}ms "
            f"{py_t / c_t:8.1f}x{flag}"
        )


if __name__ == "__main__":
    main()
