"""Numba vs numpy timings for the hot loops in kst._accel.

Usage: python benchmarks/bench_accel.py [--repeat N]
Each kernel is run once to warm the JIT, then timed best-of-N.
"""
import argparse
import time

import numpy as np
import scipy.sparse as sps

from kst import _accel


def best_of(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    rng = np.random.default_rng(0)
    n = 200_000
    per_row = 40
    cols = rng.integers(0, n, n * per_row)
    vals = rng.standard_normal(n * per_row) + 1j * rng.standard_normal(n * per_row)
    M = sps.csr_matrix((vals, cols, np.arange(0, n * per_row + 1, per_row)), shape=(n, n))
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    X = rng.standard_normal((4000, 41))
    X2 = rng.standard_normal((4000, 2))
    s0 = 4.0 + rng.standard_normal(41)
    m = 20_000
    x1, x2, a0 = (rng.uniform(0, 2 * np.pi, m) for _ in range(3))
    yield ("csr_matvec (n=2e5, nnz=8e6)",
           lambda: _accel.csr_matvec_numpy(M.indptr, M.indices, M.data, x),
           lambda: _accel.csr_matvec_numba(M.indptr, M.indices, M.data, x))
    yield ("knn (N=4000, d=41, k=16)",
           lambda: _accel.knn_numpy(X, 16),
           lambda: _accel.knn_numba(X, 16))
    yield ("knn (N=4000, d=2, k=16)",
           lambda: _accel.knn_numpy(X2, 16),
           lambda: _accel.knn_numba(X2, 16))
    yield ("l96_run (J=20, 20000 steps)",
           lambda: _accel.l96_run_numpy(s0, 4.0, 0.002, 5, 4000, 0),
           lambda: _accel.l96_run_numba(s0, 4.0, 0.002, 5, 4000, 0))
    yield ("tracer_rk4 (M=20000, 200 steps)",
           lambda: _accel.tracer_rk4_numpy(0, x1, x2, a0, 1.0, 0.005, 200, 0.5, 1.0, 1.0),
           lambda: _accel.tracer_rk4_numba(0, x1, x2, a0, 1.0, 0.005, 200, 0.5, 1.0, 1.0))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':36s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    for name, f_np, f_nb in cases():
        t_np = best_of(f_np, args.repeat)
        t_nb = best_of(f_nb, args.repeat)
        print(f"{name:36s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}")


if __name__ == "__main__":
    main()
