#!/usr/bin/env python3
"""Benchmark the native kernels against the pure-Python fallback.

Times the two hot loops on realistic workloads: DTW between
full-resolution trajectories (1000 x 1000 dynamic program) and batches of
rollouts through a trained-size model. Run after `python setup.py
build_ext --inplace` (or an install); without the extension only the
fallback rows appear.

    python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from koopflow._kernels import HAVE_NATIVE, fallback

if HAVE_NATIVE:
    from koopflow._kernels import _native


def timeit(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_dtw(n=1000, m=1000, d=2, seed=0):
    rng = np.random.default_rng(seed)
    a = np.ascontiguousarray(np.cumsum(rng.normal(size=(n, d)), axis=0))
    b = np.ascontiguousarray(np.cumsum(rng.normal(size=(m, d)), axis=0))
    rows = []
    t_py, v_py = timeit(fallback.dtw_cost, a, b)
    rows.append(("python", t_py, v_py))
    if HAVE_NATIVE:
        t_nat, v_nat = timeit(_native.dtw_cost, a, b)
        rows.append(("native", t_nat, v_nat))
        assert abs(v_nat - v_py) <= 1e-9 * max(1.0, abs(v_py))
    return rows


def bench_rollout(nu=256, d=2, r=32, steps=2000, n_rollouts=50, seed=0):
    rng = np.random.default_rng(seed)
    n = nu + d
    W = np.ascontiguousarray(rng.normal(0, 0.5, size=(nu, d)))
    b = np.ascontiguousarray(rng.uniform(0, 2 * np.pi, size=nu))
    A_top = np.ascontiguousarray(rng.normal(0, 0.1, size=(d, r)))
    B = np.ascontiguousarray(rng.normal(0, 0.1, size=(n, r)))
    goal = np.full(d, 1e9)
    h = np.ones(d)
    lo, hi = np.full(d, -1e9), np.full(d, 1e9)
    starts = rng.normal(size=(n_rollouts, d))
    out = np.empty((steps + 1, d))

    def run(kernel):
        total = 0
        for x0 in starts:
            res = kernel(
                W, b, A_top, B, 1.0, 1, np.ascontiguousarray(x0), goal, h,
                1e-12, lo, hi, steps, out,
            )
            total += res[0]
        return total

    rows = []
    t_py, c_py = timeit(run, fallback.rollout_kernel, repeat=1)
    rows.append(("python", t_py, c_py))
    if HAVE_NATIVE:
        t_nat, c_nat = timeit(run, _native.rollout_kernel, repeat=1)
        rows.append(("native", t_nat, c_nat))
        assert c_nat == c_py
    return rows


def report(title, rows, unit):
    print(f"\n{title}")
    base = rows[0][1]
    for name, t, _ in rows:
        speedup = base / t if t > 0 else float("inf")
        print(f"  {name:<8s} {t * 1e3:10.2f} ms   {speedup:6.1f}x  ({unit})")


def main():
    print(f"native extension available: {HAVE_NATIVE}")
    report("DTW 1000x1000 (d=2)", bench_dtw(), "one distance")
    report(
        "rollouts: 50 starts x 2000 steps (nu=256, r=32)",
        bench_rollout(),
        "full batch",
    )


if __name__ == "__main__":
    main()
