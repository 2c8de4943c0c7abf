"""Low-rank Koopman operator, one-step prediction, and the derived flow field.

The operator K = A B^T is never materialized: prediction applies B^T then A,
and the analytic divergence contracts the lifting Jacobian against the
factors directly, so evaluation costs O((nu+d) * r) per point.

The flow field is a per-model-step displacement; physical velocity is
displacement / model_dt. An optional diagonal affine normalization maps raw
states into the model's internal coordinates; because the map is diagonal,
the divergence of the raw-space field equals the divergence computed in
model coordinates.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Box
from .exceptions import (
    CheckpointVersionError,
    CorruptCheckpointError,
    DegenerateFieldError,
    DimensionError,
)
from .lifting import LiftingParams, lift, lift_batch

CHECKPOINT_FORMAT = "koopflow-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AffineNormalization:
    """Diagonal affine map raw -> model: x_m = (x - center) / half_extent."""

    center: np.ndarray
    half_extent: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "half_extent", np.asarray(self.half_extent, dtype=np.float64))
        if np.any(self.half_extent <= 0):
            raise ValueError("half_extent must be positive on every axis")

    @staticmethod
    def from_box(box: Box) -> "AffineNormalization":
        half = 0.5 * (box.hi - box.lo)
        # Flat axes get unit half-extent so the map stays invertible.
        half = np.where(half > 0, half, 1.0)
        return AffineNormalization(center=box.center, half_extent=half)

    def to_model(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.center) / self.half_extent

    def to_raw(self, xm) -> np.ndarray:
        return np.asarray(xm, dtype=np.float64) * self.half_extent + self.center


@dataclass
class KoopmanModel:
    """Learnable pieces (lifting, low-rank factors A and B) plus metadata.

    A and B have shape (nu+d, r); model_dt is the wall-clock duration one
    operator application represents (corpus dt times stride).
    """

    lifting: LiftingParams
    A: np.ndarray
    B: np.ndarray
    model_dt: float
    domain_box: Box
    normalization: AffineNormalization | None = None

    def __post_init__(self):
        self.A = np.ascontiguousarray(self.A, dtype=np.float64)
        self.B = np.ascontiguousarray(self.B, dtype=np.float64)
        n = self.lifting.lifted_dim
        if self.A.ndim != 2 or self.B.ndim != 2:
            raise DimensionError("A and B must be matrices")
        if self.A.shape[0] != n or self.B.shape[0] != n or self.A.shape[1] != self.B.shape[1]:
            raise DimensionError(
                f"A and B must both be ({n}, r); got {self.A.shape} and {self.B.shape}"
            )
        if self.A.shape[1] > n:
            raise DimensionError("rank r must not exceed nu + d")
        if not (self.model_dt > 0):
            raise ValueError("model_dt must be > 0")

    @property
    def d(self) -> int:
        return self.lifting.d

    @property
    def nu(self) -> int:
        return self.lifting.nu

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def lifted_dim(self) -> int:
        return self.lifting.lifted_dim

    def to_model_coords(self, x) -> np.ndarray:
        if self.normalization is None:
            return np.asarray(x, dtype=np.float64)
        return self.normalization.to_model(x)

    def to_raw_coords(self, xm) -> np.ndarray:
        if self.normalization is None:
            return np.asarray(xm, dtype=np.float64)
        return self.normalization.to_raw(xm)


@dataclass(frozen=True)
class FlowField:
    """Displacement field derived from a model: F(x) = scale * (pred(x) - x)."""

    model: KoopmanModel
    scale: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0):
            raise ValueError("scale must be > 0")


def predict_lifted(model: KoopmanModel, z) -> np.ndarray:
    """Apply the operator to a lifted vector: A (B^T z), cost O((nu+d) r)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.lifted_dim,):
        raise DimensionError(f"lifted vector must have shape ({model.lifted_dim},)")
    return model.A @ (model.B.T @ z)


def predict_state(model: KoopmanModel, x) -> np.ndarray:
    """One-step state prediction: first d components of K lift(x)."""
    xm = model.to_model_coords(x)
    z = lift(model.lifting, xm)
    out_m = model.A[: model.d] @ (model.B.T @ z)
    return model.to_raw_coords(out_m)


def predict_state_batch(model: KoopmanModel, X) -> np.ndarray:
    """Row-wise predict_state for X of shape (m, d)."""
    X = np.asarray(X, dtype=np.float64)
    Xm = model.to_model_coords(X)
    Z = lift_batch(model.lifting, Xm)
    out_m = (Z @ model.B) @ model.A[: model.d].T
    return model.to_raw_coords(out_m)


def vector_field(field: FlowField, x) -> np.ndarray:
    """Displacement per model step at x: scale * (pred(x) - x)."""
    x = np.asarray(x, dtype=np.float64)
    return field.scale * (predict_state(field.model, x) - x)


def vector_field_batch(field: FlowField, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return field.scale * (predict_state_batch(field.model, X) - X)


def divergence(field: FlowField, x) -> float:
    """Analytic divergence of the displacement field at x.

    div F = scale * (trace_d(P K J_psi(x_m)) - d) with P selecting the first
    d lifted rows. Computed as trace(A_top (B^T J)), never forming K; the
    diagonal normalization cancels, so this is the raw-space divergence.
    """
    model = field.model
    xm = model.to_model_coords(x)
    d = model.d
    theta = model.lifting.W @ xm + model.lifting.b
    # B^T J where J = [I_d; -sin(theta_j) w_j]: r x d.
    BtJ = model.B[:d].T - (model.B[d:].T * np.sin(theta)) @ model.lifting.W
    tr = float(np.sum(model.A[:d] * BtJ.T))
    return field.scale * (tr - d)


def divergence_batch(field: FlowField, X) -> np.ndarray:
    """Divergence at each row of X, vectorized over points."""
    model = field.model
    X = np.asarray(X, dtype=np.float64)
    Xm = model.to_model_coords(X)
    d = model.d
    W, b = model.lifting.W, model.lifting.b
    sin_theta = np.sin(Xm @ W.T + b)
    # trace splits into a constant block term and a per-point feature term.
    const = float(np.sum(model.A[:d] * model.B[:d]))
    mvec = np.sum(W * (model.B[d:] @ model.A[:d].T), axis=1)
    return field.scale * (const - sin_theta @ mvec - d)


def scale_to_speed(field: FlowField, max_speed: float, probe_grid) -> FlowField:
    """Rescale so the max speed over the probe grid equals max_speed.

    Speed at x is ||vector_field(x)|| / model_dt in raw units per second.
    """
    if not (max_speed > 0):
        raise ValueError("max_speed must be > 0")
    probe = np.asarray(probe_grid, dtype=np.float64)
    if probe.ndim != 2 or probe.shape[0] == 0:
        raise ValueError("probe_grid must be a non-empty (n, d) array")
    speeds = np.linalg.norm(vector_field_batch(field, probe), axis=1) / field.model.model_dt
    current = float(speeds.max())
    if current == 0.0:
        raise DegenerateFieldError("field is zero over the entire probe grid")
    ratio = max_speed / current
    return replace(field, scale=field.scale * ratio)


# --- checkpoint serialization ------------------------------------------------
# JSON with base64 little-endian float64 payloads: lossless round-trip, and a
# sha256 over the raw parameter bytes to catch corruption.


def _encode(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return {"shape": list(arr.shape), "data": base64.b64encode(data).decode("ascii")}


def _decode(obj: dict, name: str) -> np.ndarray:
    try:
        raw = base64.b64decode(obj["data"], validate=True)
        shape = tuple(int(s) for s in obj["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"bad array field {name!r}: {exc}") from None
    expected = 8 * int(np.prod(shape)) if shape else 8
    if len(raw) != expected:
        raise CorruptCheckpointError(
            f"array {name!r}: payload holds {len(raw)} bytes, expected {expected}"
        )
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def _params_digest(model: KoopmanModel) -> str:
    h = hashlib.sha256()
    for arr in (model.lifting.W, model.lifting.b, model.A, model.B):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def save(model: KoopmanModel, path) -> None:
    """Write a checkpoint; load(save(m)) restores every parameter bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "d": model.d,
        "nu": model.nu,
        "rank": model.rank,
        "model_dt": model.model_dt,
        "domain_box": {"lo": model.domain_box.lo.tolist(), "hi": model.domain_box.hi.tolist()},
        "normalization": None
        if model.normalization is None
        else {
            "center": model.normalization.center.tolist(),
            "half_extent": model.normalization.half_extent.tolist(),
        },
        "params": {
            "W": _encode(model.lifting.W),
            "b": _encode(model.lifting.b),
            "A": _encode(model.A),
            "B": _encode(model.B),
        },
        "params_sha256": _params_digest(model),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load(path) -> KoopmanModel:
    """Read a checkpoint written by save; validates version and integrity."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"unreadable checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {version!r} unsupported (current {CHECKPOINT_VERSION})"
        )
    try:
        params = doc["params"]
        W = _decode(params["W"], "W")
        b = _decode(params["b"], "b")
        A = _decode(params["A"], "A")
        B = _decode(params["B"], "B")
        box = Box(np.asarray(doc["domain_box"]["lo"]), np.asarray(doc["domain_box"]["hi"]))
        norm = doc["normalization"]
        model_dt = float(doc["model_dt"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"missing or malformed field: {exc}") from None
    normalization = None
    if norm is not None:
        normalization = AffineNormalization(
            center=np.asarray(norm["center"]), half_extent=np.asarray(norm["half_extent"])
        )
    model = KoopmanModel(
        lifting=LiftingParams(W, b),
        A=A,
        B=B,
        model_dt=model_dt,
        domain_box=box,
        normalization=normalization,
    )
    digest = doc.get("params_sha256")
    if digest is not None and digest != _params_digest(model):
        raise CorruptCheckpointError("parameter checksum mismatch")
    return model
