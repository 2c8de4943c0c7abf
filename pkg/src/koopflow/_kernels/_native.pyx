# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Native kernels: DTW dynamic program and the rollout stepping loop.

Mirrors koopflow._kernels.fallback; keep both in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, isfinite, sqrt

cnp.import_array()

REACHED_GOAL = 0
HIT_BOUNDARY = 1
MAX_STEPS = 2
NONFINITE = 3


def dtw_cost(const double[:, ::1] a, const double[:, ::1] b):
    """Accumulated DTW cost with Euclidean local distance (see fallback)."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, best, c
    prev_arr = np.empty(m, dtype=np.float64)
    cur_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] prev = prev_arr
    cdef double[::1] cur = cur_arr
    cdef double[::1] tmp

    acc = 0.0
    for k in range(d):
        diff = a[0, k] - b[0, k]
        acc += diff * diff
    prev[0] = sqrt(acc)
    for j in range(1, m):
        acc = 0.0
        for k in range(d):
            diff = a[0, k] - b[j, k]
            acc += diff * diff
        prev[j] = prev[j - 1] + sqrt(acc)
    for i in range(1, n):
        acc = 0.0
        for k in range(d):
            diff = a[i, k] - b[0, k]
            acc += diff * diff
        cur[0] = prev[0] + sqrt(acc)
        for j in range(1, m):
            acc = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                acc += diff * diff
            c = sqrt(acc)
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = c + best
        tmp = prev
        prev = cur
        cur = tmp
    return prev[m - 1]


def rollout_kernel(
    const double[:, ::1] W,
    const double[::1] b,
    const double[:, ::1] A_top,
    const double[:, ::1] B,
    double scale,
    int substeps,
    const double[::1] x0,
    const double[::1] goal,
    const double[::1] h,
    double eps,
    const double[::1] lo,
    const double[::1] hi,
    int max_steps,
    double[:, ::1] out,
):
    """Rollout stepping loop in model coordinates (see fallback docstring)."""
    cdef Py_ssize_t d = x0.shape[0]
    cdef Py_ssize_t nu = W.shape[0]
    cdef Py_ssize_t r = A_top.shape[1]
    cdef Py_ssize_t n_lift = B.shape[0]
    cdef double step_frac = scale / substeps
    cdef Py_ssize_t i, j, k, step
    cdef double acc, diff, val
    cdef bint inside, finite

    x_arr = np.empty(d, dtype=np.float64)
    feat_arr = np.empty(nu, dtype=np.float64)
    u_arr = np.empty(r, dtype=np.float64)
    xn_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] feat = feat_arr
    cdef double[::1] u = u_arr
    cdef double[::1] xn = xn_arr

    for i in range(d):
        x[i] = x0[i]
        out[0, i] = x0[i]
    step = 0
    while True:
        acc = 0.0
        for i in range(d):
            diff = (x[i] - goal[i]) * h[i]
            acc += diff * diff
        if sqrt(acc) <= eps:
            return step + 1, REACHED_GOAL, -1
        inside = True
        for i in range(d):
            if x[i] < lo[i] or x[i] > hi[i]:
                inside = False
                break
        if not inside:
            return step + 1, HIT_BOUNDARY, -1
        if step == max_steps:
            return step + 1, MAX_STEPS, -1
        for j in range(nu):
            acc = b[j]
            for i in range(d):
                acc += W[j, i] * x[i]
            feat[j] = cos(acc)
        for k in range(r):
            u[k] = 0.0
        for i in range(d):
            val = x[i]
            for k in range(r):
                u[k] += B[i, k] * val
        for j in range(nu):
            val = feat[j]
            for k in range(r):
                u[k] += B[d + j, k] * val
        finite = True
        for i in range(d):
            acc = 0.0
            for k in range(r):
                acc += A_top[i, k] * u[k]
            xn[i] = x[i] + step_frac * (acc - x[i])
            if not isfinite(xn[i]):
                finite = False
        if not finite:
            return step + 1, NONFINITE, step + 1
        step += 1
        for i in range(d):
            x[i] = xn[i]
            out[step, i] = xn[i]
