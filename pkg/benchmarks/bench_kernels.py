#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Sizes mirror the real workload: 2048-dim hashed features projected to
256 dims during scorer training, and CSR logistic epochs over tf-idf
rows during self-training.

Usage:
    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from weaklabel import kernels

if not kernels.HAS_NUMBA:
    raise SystemExit("numba is not importable; nothing to compare")


def timeit(fn, repeat):
    fn()  # warmup (JIT compile / cache touch)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_project(rng, repeat):
    proj = rng.normal(size=(2048, 256))
    idx = np.sort(rng.choice(2048, size=400, replace=False)).astype(np.int64)
    val = rng.normal(size=400)
    loops = 500
    return ("project_rows (nnz=400, 2048x256)",
            timeit(lambda: [kernels.project_rows_nb(proj, idx, val)
                            for _ in range(loops)], repeat),
            timeit(lambda: [kernels.project_rows_np(proj, idx, val)
                            for _ in range(loops)], repeat))


def bench_scatter(rng, repeat):
    idx = np.sort(rng.choice(2048, size=400, replace=False)).astype(np.int64)
    val = rng.normal(size=400)
    g = rng.normal(size=256)
    out = np.zeros((2048, 256))
    loops = 500
    return ("scatter_add_outer (nnz=400, 2048x256)",
            timeit(lambda: [kernels.scatter_add_outer_nb(out, idx, val, g)
                            for _ in range(loops)], repeat),
            timeit(lambda: [kernels.scatter_add_outer_np(out, idx, val, g)
                            for _ in range(loops)], repeat))


def bench_adamw(rng, repeat):
    shape = (2048, 256)
    state = {k: rng.normal(size=shape) for k in "pgmv"}
    state["v"] = np.abs(state["v"])
    loops = 50

    def run(fn):
        p, m, v = (state[k].copy() for k in "pmv")
        for t in range(1, loops + 1):
            fn(p, state["g"], m, v, t, 1e-2, 0.9, 0.999, 1e-8, 1e-4)

    return ("adamw_step (2048x256)",
            timeit(lambda: run(kernels.adamw_step_nb), repeat),
            timeit(lambda: run(kernels.adamw_step_np), repeat))


def make_csr(rng, n_rows, n_cols, nnz_per_row):
    indices = np.concatenate([
        np.sort(rng.choice(n_cols, size=nnz_per_row, replace=False))
        for _ in range(n_rows)]).astype(np.int64)
    data = rng.random(indices.size) + 0.1
    indptr = np.arange(0, (n_rows + 1) * nnz_per_row, nnz_per_row, dtype=np.int64)
    return data, indices, indptr


def bench_logistic(rng, repeat):
    data, indices, indptr = make_csr(rng, 2000, 5000, 60)
    y = rng.integers(0, 2, size=2000).astype(np.float64)

    def run(fn):
        w = np.zeros(5000)
        fn(data, indices, indptr, y, w, 0.0, 20, 1.0, 1e-4)

    return ("logistic_epochs (2000x5000, nnz/row=60, 20 epochs)",
            timeit(lambda: run(kernels.logistic_epochs_nb), repeat),
            timeit(lambda: run(kernels.logistic_epochs_np), repeat))


def bench_matvec(rng, repeat):
    data, indices, indptr = make_csr(rng, 2000, 5000, 60)
    w = rng.normal(size=5000)
    loops = 200
    return ("csr_matvec (2000x5000)",
            timeit(lambda: [kernels.csr_matvec_nb(data, indices, indptr, w, 0.1)
                            for _ in range(loops)], repeat),
            timeit(lambda: [kernels.csr_matvec_np(data, indices, indptr, w, 0.1)
                            for _ in range(loops)], repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions; best-of is reported")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = [bench(rng, args.repeat) for bench in
            (bench_project, bench_scatter, bench_adamw, bench_logistic,
             bench_matvec)]

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba':>9}  {'numpy':>9}  speedup")
    for name, t_nb, t_np in rows:
        print(f"{name:<{width}}  {t_nb * 1e3:8.1f}ms  {t_np * 1e3:8.1f}ms  "
              f"{t_np / t_nb:6.1f}x")


if __name__ == "__main__":
    main()
