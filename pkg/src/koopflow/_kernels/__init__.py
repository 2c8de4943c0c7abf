"""Kernel backend selection: compiled extension when available, else numpy.

Set KOOPFLOW_PURE_PYTHON=1 to force the fallback (useful for benchmarking
and for debugging the compiled path against the reference).
"""

import os

from . import fallback

if os.environ.get("KOOPFLOW_PURE_PYTHON") == "1":
    _native = None
else:
    try:
        from . import _native  # type: ignore[no-redef]
    except ImportError:
        _native = None

HAVE_NATIVE = _native is not None

REACHED_GOAL = fallback.REACHED_GOAL
HIT_BOUNDARY = fallback.HIT_BOUNDARY
MAX_STEPS = fallback.MAX_STEPS
NONFINITE = fallback.NONFINITE


def backend_name() -> str:
    return "native" if HAVE_NATIVE else "python"


def dtw_cost(a, b) -> float:
    if HAVE_NATIVE:
        return _native.dtw_cost(a, b)
    return fallback.dtw_cost(a, b)


def rollout_kernel(W, b, A_top, B, scale, substeps, x0, goal, h, eps, lo, hi, max_steps, out):
    if HAVE_NATIVE:
        return _native.rollout_kernel(
            W, b, A_top, B, scale, substeps, x0, goal, h, eps, lo, hi, max_steps, out
        )
    return fallback.rollout_kernel(
        W, b, A_top, B, scale, substeps, x0, goal, h, eps, lo, hi, max_steps, out
    )
