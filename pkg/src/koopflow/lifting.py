"""Learnable Fourier-feature state lifting and its exact Jacobian.

The lifted vector keeps the raw state in its first d entries and appends nu
cosine features cos(w_j.x + b_j); frequencies W and phases b are the
learnable parameters. Higher frequencies represent flows with greater
curvature, so the initialization scale must match the data scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError


@dataclass
class LiftingParams:
    """Fourier features: W has shape (nu, d), b has shape (nu,)."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.ndim != 1 or self.W.shape[0] != self.b.shape[0]:
            raise DimensionError("W must be (nu, d) and b (nu,)")

    @property
    def nu(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def lifted_dim(self) -> int:
        return self.nu + self.d

    def copy(self) -> "LiftingParams":
        return LiftingParams(self.W.copy(), self.b.copy())


def init_lifting(d: int, nu: int, sigma_w: float, rng: np.random.Generator) -> LiftingParams:
    """Draw W ~ N(0, sigma_w^2) i.i.d. and b ~ U[0, 2*pi)."""
    if d < 1 or nu < 0:
        raise ValueError("need d >= 1 and nu >= 0")
    W = rng.normal(0.0, sigma_w, size=(nu, d))
    b = rng.uniform(0.0, 2.0 * np.pi, size=nu)
    return LiftingParams(W, b)


def _check_state(params: LiftingParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.d:
        raise DimensionError(f"state must have dimension {params.d}, got shape {x.shape}")
    return x


def lift(params: LiftingParams, x) -> np.ndarray:
    """Lifted vector [x, cos(W x + b)] of dimension nu + d.

    The first d entries equal x exactly (bitwise); cosine entries lie in
    [-1, 1].
    """
    x = _check_state(params, x)
    out = np.empty(params.lifted_dim)
    out[: params.d] = x
    out[params.d :] = np.cos(params.W @ x + params.b)
    return out


def lift_batch(params: LiftingParams, X) -> np.ndarray:
    """Row-wise lift of X with shape (m, d) -> (m, nu + d)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise DimensionError(f"batch must have shape (m, {params.d}), got {X.shape}")
    out = np.empty((X.shape[0], params.lifted_dim))
    out[:, : params.d] = X
    out[:, params.d :] = np.cos(X @ params.W.T + params.b)
    return out


def lift_jacobian(params: LiftingParams, x) -> np.ndarray:
    """Exact Jacobian of lift with respect to the state, shape (nu+d, d).

    Top d x d block is the identity; row d+j is -sin(w_j.x + b_j) * w_j.
    """
    x = _check_state(params, x)
    d, nu = params.d, params.nu
    J = np.zeros((nu + d, d))
    J[:d, :d] = np.eye(d)
    theta = params.W @ x + params.b
    J[d:, :] = -np.sin(theta)[:, None] * params.W
    return J
