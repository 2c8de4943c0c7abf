"""Loss terms and exact closed-form gradients for all learnable parameters.

Three terms enter the weighted objective:

  koopman          mean squared lifted one-step residual over a batch of
                   time-shifted pairs,
  flow_divergence  mean squared analytic divergence of the unit-scale field
                   at supervision points (the batch states, which lie on the
                   training trajectories),
  goal             mean squared lifted residual at the single goal point,
                   driving the goal to a fixed point of the operator.

"Mean" is over batch elements and coordinates, so gradients are batch-size
invariant and the weights transfer across strides.

Gradients with respect to W, b, A, B are derived by hand and returned in
closed form; the divergence term contributes second-order structure (the
parameter gradient of a Jacobian trace). Exactness against central finite
differences is a hard contract enforced by the test suite. All math runs in
the model's internal coordinates; raw-space inputs are mapped once on entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrainingPair
from .exceptions import DimensionError, InsufficientDataError
from .model import KoopmanModel


@dataclass(frozen=True)
class LossWeights:
    """Weighting coefficients (beta_k, beta_d, beta_g), all >= 0, not all 0."""

    beta_k: float = 1.0
    beta_d: float = 0.01
    beta_g: float = 0.01

    def __post_init__(self):
        if self.beta_k < 0 or self.beta_d < 0 or self.beta_g < 0:
            raise ValueError("loss weights must be >= 0")
        if self.beta_k == 0 and self.beta_d == 0 and self.beta_g == 0:
            raise ValueError("at least one loss weight must be nonzero")


@dataclass(frozen=True)
class LossBreakdown:
    koopman: float
    flow_divergence: float
    goal: float
    total: float


@dataclass
class ParameterGradient:
    """Gradients with the same shapes as (W, b, A, B)."""

    dW: np.ndarray
    db: np.ndarray
    dA: np.ndarray
    dB: np.ndarray

    @staticmethod
    def zeros_like(model: KoopmanModel) -> "ParameterGradient":
        return ParameterGradient(
            dW=np.zeros_like(model.lifting.W),
            db=np.zeros_like(model.lifting.b),
            dA=np.zeros_like(model.A),
            dB=np.zeros_like(model.B),
        )

    def add_scaled(self, other: "ParameterGradient", weight: float) -> None:
        self.dW += weight * other.dW
        self.db += weight * other.db
        self.dA += weight * other.dA
        self.dB += weight * other.dB

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.dW))
            and np.all(np.isfinite(self.db))
            and np.all(np.isfinite(self.dA))
            and np.all(np.isfinite(self.dB))
        )


def as_pair_arrays(batch, d: int):
    """Accept a list of TrainingPair or an (X, Y) array tuple."""
    if isinstance(batch, tuple) and len(batch) == 2:
        X = np.asarray(batch[0], dtype=np.float64)
        Y = np.asarray(batch[1], dtype=np.float64)
    else:
        pairs = list(batch)
        if pairs and not isinstance(pairs[0], TrainingPair):
            raise TypeError("batch must be a list of TrainingPair or an (X, Y) tuple")
        X = np.asarray([p.x for p in pairs], dtype=np.float64).reshape(-1, d)
        Y = np.asarray([p.y for p in pairs], dtype=np.float64).reshape(-1, d)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != d:
        raise DimensionError(f"batch arrays must both be (m, {d})")
    return X, Y


def _lift_parts(model: KoopmanModel, Xm: np.ndarray):
    """Lifted batch plus the sine values needed for parameter gradients."""
    theta = Xm @ model.lifting.W.T + model.lifting.b
    psi = np.concatenate([Xm, np.cos(theta)], axis=1)
    return psi, np.sin(theta)


def _residual_term(model: KoopmanModel, Xm, Ym, want_grads: bool):
    """Shared core of the koopman and goal terms.

    Loss is mean over pairs and lifted coordinates of the squared residual
    psi(y) - A B^T psi(x). Gradients flow into A and B directly and into
    (W, b) through both psi(x) and psi(y).
    """
    m, d = Xm.shape
    n = model.lifted_dim
    psi_x, sin_x = _lift_parts(model, Xm)
    psi_y, sin_y = _lift_parts(model, Ym)
    C = psi_x @ model.B  # (m, r)
    resid = psi_y - C @ model.A.T  # (m, n)
    loss = float(np.sum(resid * resid)) / (m * n)
    if not want_grads:
        return loss, None
    s = 2.0 / (m * n)
    RA = resid @ model.A  # (m, r)
    dA = -s * (resid.T @ C)
    dB = -s * (psi_x.T @ RA)
    dW = np.zeros_like(model.lifting.W)
    db = np.zeros_like(model.lifting.b)
    # d(loss)/d(psi_y) = s * resid; d(loss)/d(psi_x) = -s * RA B^T.
    for states, sens, sin_theta in (
        (Ym, s * resid, sin_y),
        (Xm, -s * (RA @ model.B.T), sin_x),
    ):
        g = sens[:, d:] * sin_theta  # (m, nu)
        db -= g.sum(axis=0)
        dW -= g.T @ states
    return loss, ParameterGradient(dW=dW, db=db, dA=dA, dB=dB)


def _divergence_term(model: KoopmanModel, Pm, want_grads: bool):
    """Mean squared divergence at the points Pm (model coordinates).

    With A_top = A[:d], B_bot = B[d:], q_j = A_top B_bot[j] and
    m_j = w_j . q_j, the divergence at x is

        D(x) = sum(A_top * B_top) - d - sum_j sin(theta_j(x)) m_j,

    so parameter gradients need both the first-order theta path and the
    second-order path through q_j (gradient of the Jacobian trace).
    """
    n_pts, d = Pm.shape
    W, b = model.lifting.W, model.lifting.b
    A_top = model.A[:d]  # (d, r)
    B_top = model.B[:d]
    B_bot = model.B[d:]  # (nu, r)
    theta = Pm @ W.T + b
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    Q = B_bot @ A_top.T  # (nu, d), rows q_j
    mvec = np.sum(W * Q, axis=1)  # (nu,)
    const = float(np.sum(A_top * B_top))
    Dvals = const - d - sin_t @ mvec  # (n_pts,)
    loss = float(np.dot(Dvals, Dvals)) / n_pts
    if not want_grads:
        return loss, None
    g = (2.0 / n_pts) * Dvals  # d(loss)/d(D) per point
    gsum = float(g.sum())
    gc = g @ cos_t  # (nu,): sum_p g_p cos(theta_pj)
    gs = g @ sin_t  # (nu,): sum_p g_p sin(theta_pj)
    db = -gc * mvec
    dW = -mvec[:, None] * (cos_t.T @ (g[:, None] * Pm)) - gs[:, None] * Q
    dA = np.zeros_like(model.A)
    dA[:d] = gsum * B_top - (W * gs[:, None]).T @ B_bot
    dB = np.zeros_like(model.B)
    dB[:d] = gsum * A_top
    dB[d:] = -gs[:, None] * (W @ A_top)
    return loss, ParameterGradient(dW=dW, db=db, dA=dA, dB=dB)


def loss_koopman(model: KoopmanModel, batch) -> float:
    """Mean squared lifted one-step residual over the batch."""
    X, Y = as_pair_arrays(batch, model.d)
    if X.shape[0] == 0:
        raise InsufficientDataError("koopman loss needs a non-empty batch")
    loss, _ = _residual_term(
        model, model.to_model_coords(X), model.to_model_coords(Y), want_grads=False
    )
    return loss


def loss_divergence(model: KoopmanModel, points) -> float:
    """Mean squared unit-scale divergence at the given states."""
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0 or P.shape[1] != model.d:
        raise InsufficientDataError(f"need a non-empty (n, {model.d}) point array")
    loss, _ = _divergence_term(model, model.to_model_coords(P), want_grads=False)
    return loss


def loss_goal(model: KoopmanModel, goal) -> float:
    """Mean squared lifted residual at the goal (fixed-point penalty)."""
    g = np.asarray(goal, dtype=np.float64)
    if g.shape != (model.d,):
        raise DimensionError(f"goal must have dimension {model.d}")
    gm = model.to_model_coords(g).reshape(1, -1)
    loss, _ = _residual_term(model, gm, gm, want_grads=False)
    return loss


def total_loss(model: KoopmanModel, batch, div_points, goal, weights: LossWeights) -> LossBreakdown:
    """All three terms plus the weighted total."""
    lk = loss_koopman(model, batch)
    ld = loss_divergence(model, div_points)
    lg = loss_goal(model, goal)
    return LossBreakdown(
        koopman=lk,
        flow_divergence=ld,
        goal=lg,
        total=weights.beta_k * lk + weights.beta_d * ld + weights.beta_g * lg,
    )


def gradients(model: KoopmanModel, batch, div_points, goal, weights: LossWeights):
    """Weighted loss breakdown and exact total-loss gradients.

    A term is evaluated only when its weight is nonzero; disabled terms are
    reported as 0.0 and contribute no gradient work at all, so switching a
    weight off reproduces the reduced objective exactly.
    """
    total_grad = ParameterGradient.zeros_like(model)
    lk = ld = lg = 0.0
    if weights.beta_k != 0.0:
        X, Y = as_pair_arrays(batch, model.d)
        if X.shape[0] == 0:
            raise InsufficientDataError("koopman loss needs a non-empty batch")
        lk, grad_k = _residual_term(
            model, model.to_model_coords(X), model.to_model_coords(Y), want_grads=True
        )
        total_grad.add_scaled(grad_k, weights.beta_k)
    if weights.beta_d != 0.0:
        P = np.asarray(div_points, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] == 0 or P.shape[1] != model.d:
            raise InsufficientDataError(f"need a non-empty (n, {model.d}) point array")
        ld, grad_d = _divergence_term(model, model.to_model_coords(P), want_grads=True)
        total_grad.add_scaled(grad_d, weights.beta_d)
    if weights.beta_g != 0.0:
        g = np.asarray(goal, dtype=np.float64)
        if g.shape != (model.d,):
            raise DimensionError(f"goal must have dimension {model.d}")
        gm = model.to_model_coords(g).reshape(1, -1)
        lg, grad_g = _residual_term(model, gm, gm, want_grads=True)
        total_grad.add_scaled(grad_g, weights.beta_g)
    breakdown = LossBreakdown(
        koopman=lk,
        flow_divergence=ld,
        goal=lg,
        total=weights.beta_k * lk + weights.beta_d * ld + weights.beta_g * lg,
    )
    return breakdown, total_grad
