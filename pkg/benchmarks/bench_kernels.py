#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-Python fallback.

Synthesizes a research-scale signature grid (tests x versions of interned
behavior ids), runs both backends on the same inputs, checks they agree,
and prints the timing table. Desk-scale matrices are trivial either way;
this is about the aggregated-SRM sizes where the kernels dominate analysis
time.

    python3 benchmarks/bench_kernels.py --tests 400 --versions 1200
"""

import argparse
import random
import time

import numpy as np

from nvarena import _kernels_py

try:
    from nvarena import _ckernels
except ImportError:
    _ckernels = None


def make_grid(rng, n_tests, n_versions, n_behaviors):
    # a few dominant behaviors plus a noisy tail, like real version diversity
    grid = np.empty((n_tests, n_versions), dtype=np.int64)
    for v in range(n_versions):
        base = rng.randrange(n_behaviors // 4 + 1)
        for t in range(n_tests):
            grid[t, v] = base if rng.random() < 0.8 else rng.randrange(n_behaviors)
    return grid


def timed(fn, *args, repeat=3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return result, best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tests", type=int, default=400)
    parser.add_argument("--versions", type=int, default=1200)
    parser.add_argument("--behaviors", type=int, default=50)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    grid = make_grid(rng, args.tests, args.versions, args.behaviors)
    ref = grid[:, 0].copy()
    kills = np.ascontiguousarray(grid != grid[:, :1], dtype=np.uint8)

    rows = []

    def bench(name, py_fn, py_args, c_fn, c_args, eq):
        py_result, py_time = timed(py_fn, *py_args)
        if c_fn is None:
            rows.append((name, py_time, None, None))
            return
        c_result, c_time = timed(c_fn, *c_args)
        assert eq(py_result, c_result), f"{name}: backends disagree"
        rows.append((name, py_time, c_time, py_time / c_time))

    bench(
        "kill_grid",
        _kernels_py.kill_grid, (grid, ref),
        _ckernels.kill_grid if _ckernels else None, (grid, ref),
        lambda a, b: np.array_equal(np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)),
    )
    bench(
        "vote_rows",
        _kernels_py.vote_rows, (grid,),
        _ckernels.vote_rows if _ckernels else None, (grid,),
        lambda a, b: a[0].tolist() == b[0].tolist() and a[1].tolist() == b[1].tolist(),
    )
    bench(
        "greedy_cover",
        _kernels_py.greedy_cover, (kills.astype(bool),),
        _ckernels.greedy_cover if _ckernels else None, (kills,),
        lambda a, b: list(a) == list(b),
    )

    print(f"grid: {args.tests} tests x {args.versions} versions, {args.behaviors} behaviors")
    print(f"{'kernel':<14}{'python':>12}{'cython':>12}{'speedup':>10}")
    for name, py_time, c_time, speedup in rows:
        if c_time is None:
            print(f"{name:<14}{py_time * 1e3:>10.1f}ms{'(not built)':>12}{'-':>10}")
        else:
            print(f"{name:<14}{py_time * 1e3:>10.1f}ms{c_time * 1e3:>10.1f}ms{speedup:>9.1f}x")


if __name__ == "__main__":
    main()
