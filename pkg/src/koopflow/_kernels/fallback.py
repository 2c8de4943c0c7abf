"""Pure-Python/numpy implementations of the hot kernels.

These mirror the native Cython kernels operation-for-operation so either
backend can serve the same callers; the native module is preferred at import
when it built successfully. See benchmarks/bench_kernels.py for the speed
comparison.
"""

from __future__ import annotations

import math

import numpy as np

REACHED_GOAL = 0
HIT_BOUNDARY = 1
MAX_STEPS = 2
NONFINITE = 3


def dtw_cost(a: np.ndarray, b: np.ndarray) -> float:
    """Accumulated dynamic-time-warping cost, Euclidean local distance.

    Full-length alignment (both endpoints anchored), unit moves
    {match, insert, delete}, no window, no normalization.
    """
    n, m = a.shape[0], b.shape[0]
    # Local cost matrix, vectorized; the DP recurrence itself is sequential.
    diff = a[:, None, :] - b[None, :, :]
    cost = np.sqrt(np.sum(diff * diff, axis=2))
    prev = np.empty(m)
    cur = np.empty(m)
    prev[0] = cost[0, 0]
    for j in range(1, m):
        prev[j] = prev[j - 1] + cost[0, j]
    for i in range(1, n):
        cur[0] = prev[0] + cost[i, 0]
        row = cost[i]
        for j in range(1, m):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = row[j] + best
        prev, cur = cur, prev
    return float(prev[m - 1])


def rollout_kernel(
    W: np.ndarray,
    b: np.ndarray,
    A_top: np.ndarray,
    B: np.ndarray,
    scale: float,
    substeps: int,
    x0: np.ndarray,
    goal: np.ndarray,
    h: np.ndarray,
    eps: float,
    lo: np.ndarray,
    hi: np.ndarray,
    max_steps: int,
    out: np.ndarray,
):
    """Iterate x <- x + (scale/substeps) * (pred(x) - x) in model coordinates.

    Termination is checked at every recorded state, goal before boundary:
    raw-space goal distance uses the per-axis scale h. Returns
    (n_states, reason, blow_step); states are written into `out`.
    """
    d = x0.shape[0]
    step_frac = scale / substeps
    x = np.array(x0, dtype=np.float64)
    out[0] = x
    k = 0
    while True:
        delta = (x - goal) * h
        if math.sqrt(float(np.dot(delta, delta))) <= eps:
            return k + 1, REACHED_GOAL, -1
        if np.any(x < lo) or np.any(x > hi):
            return k + 1, HIT_BOUNDARY, -1
        if k == max_steps:
            return k + 1, MAX_STEPS, -1
        z_feat = np.cos(W @ x + b)
        u = B[:d].T @ x + B[d:].T @ z_feat
        pred = A_top @ u
        x = x + step_frac * (pred - x)
        if not np.all(np.isfinite(x)):
            return k + 1, NONFINITE, k + 1
        k += 1
        out[k] = x
