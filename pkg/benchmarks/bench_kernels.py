"""Benchmark the compiled treated-neighbor-sum kernel against the pure
numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n 200000] [--k 20] [--reps 30]
"""

import argparse
import time

import numpy as np

from netadjust.graph import watts_strogatz
from netadjust.kernels import numpy_backend

try:
    from netadjust.kernels import _cykernels

    HAVE_CYTHON = True
except ImportError:
    HAVE_CYTHON = False


def timeit(fn, indptr, indices, v, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn(indptr, indices, v)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=200_000)
    parser.add_argument("--k", type=int, default=20)
    parser.add_argument("--reps", type=int, default=30)
    args = parser.parse_args()

    g = watts_strogatz(args.n, args.k, 0.1, seed=0)
    v = (np.random.default_rng(1).random(g.n) < 0.5).astype(np.float64)
    indptr, indices = g.indptr, g.indices

    t_np, out_np = timeit(numpy_backend.neighbor_sum, indptr, indices, v, args.reps)
    print(f"graph: n={g.n} edges={g.n_edges}")
    print(f"numpy  backend: {t_np * 1e3:8.3f} ms")
    if HAVE_CYTHON:
        t_cy, out_cy = timeit(_cykernels.neighbor_sum, indptr, indices, v, args.reps)
        assert np.array_equal(np.asarray(out_cy), out_np), "backends disagree"
        print(f"cython backend: {t_cy * 1e3:8.3f} ms  (speedup x{t_np / t_cy:.2f})")
    else:
        print("cython backend: not built")


if __name__ == "__main__":
    main()
