"""Trajectory-similarity metrics between demonstrations and model rollouts.

dtwd: classic dynamic time warping with Euclidean local cost, both endpoints
anchored, no window, and no path-length normalization (the unnormalized
accumulated cost); every report records that choice.

sea: swept error area between equal-length trajectories, summing per-segment
quadrilateral areas; each quadrilateral (demo_t, demo_t+1, pred_t+1, pred_t)
is split into two triangles whose absolute areas are added, which stays
well-defined when the quadrilateral self-intersects.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import DemonstrationSet
from .exceptions import DimensionError, InsufficientDataError, NumericBlowupError
from .model import FlowField, KoopmanModel
from .rollout import DEFAULT_BOX_INFLATION, default_eps_goal, substep_rollout


def _as_traj(t, name: str) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise InsufficientDataError(f"{name} must be a non-empty (T, d) trajectory")
    return np.ascontiguousarray(arr)


def dtwd(a, b) -> float:
    """Dynamic-time-warping distance between two trajectories."""
    a = _as_traj(a, "a")
    b = _as_traj(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError("trajectories must share a dimension")
    return _kernels.dtw_cost(a, b)


def _tri_area(p, q, r) -> np.ndarray:
    """Absolute triangle areas, vectorized; rows of p, q, r are vertices."""
    u = q - p
    v = r - p
    if p.shape[1] == 2:
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        return 0.5 * np.abs(cross)
    if p.shape[1] == 3:
        cross = np.cross(u, v)
        return 0.5 * np.linalg.norm(cross, axis=1)
    raise DimensionError("swept area is defined for 2-D or 3-D trajectories")


def sea(demo, pred) -> float:
    """Swept error area between two equal-length trajectories."""
    demo = _as_traj(demo, "demo")
    pred = _as_traj(pred, "pred")
    if demo.shape != pred.shape:
        raise DimensionError(
            f"sea needs equal-length trajectories, got {demo.shape} vs {pred.shape}"
        )
    if demo.shape[0] < 2:
        raise InsufficientDataError("sea needs trajectories of length >= 2")
    d0, d1 = demo[:-1], demo[1:]
    p0, p1 = pred[:-1], pred[1:]
    return float(np.sum(_tri_area(d0, d1, p1) + _tri_area(d0, p1, p0)))


def resample_to(traj, n: int) -> np.ndarray:
    """Arc-length piecewise-linear resampling to exactly n points.

    Endpoints are preserved exactly; a zero-length trajectory (all points
    identical) cannot be parameterized and raises.
    """
    traj = _as_traj(traj, "traj")
    if traj.shape[0] < 2 or n < 2:
        raise InsufficientDataError("resample needs input length >= 2 and n >= 2")
    seg = np.linalg.norm(np.diff(traj, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        raise InsufficientDataError("cannot resample a zero-length trajectory")
    targets = np.linspace(0.0, total, n)
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    seg_len = seg[idx]
    frac = np.where(seg_len > 0, (targets - cum[idx]) / np.where(seg_len > 0, seg_len, 1.0), 0.0)
    out = traj[idx] + frac[:, None] * (traj[idx + 1] - traj[idx])
    out[0] = traj[0]
    out[-1] = traj[-1]
    return out


@dataclass(frozen=True)
class MetricsReport:
    per_demo_dtwd: list
    per_demo_sea: list
    mean_dtwd: float
    mean_sea: float
    std_dtwd: float
    std_sea: float
    excluded_demos: list = field(default_factory=list)  # (demo_id, reason)
    dtwd_normalized: bool = False

    def to_json_dict(self) -> dict:
        return {
            "per_demo_dtwd": self.per_demo_dtwd,
            "per_demo_sea": self.per_demo_sea,
            "mean_dtwd": self.mean_dtwd,
            "mean_sea": self.mean_sea,
            "std_dtwd": self.std_dtwd,
            "std_sea": self.std_sea,
            "excluded_demos": self.excluded_demos,
            "dtwd_normalized": self.dtwd_normalized,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)

    CSV_HEADER = ["mean_dtwd", "std_dtwd", "mean_sea", "std_sea", "n_demos", "n_excluded"]

    def csv_row(self) -> list:
        """Row for sweep tables, aligned with CSV_HEADER."""
        return [
            self.mean_dtwd,
            self.std_dtwd,
            self.mean_sea,
            self.std_sea,
            len(self.per_demo_dtwd),
            len(self.excluded_demos),
        ]


def evaluate(
    model: KoopmanModel,
    full_set: DemonstrationSet,
    substeps: int | None = None,
    eps_goal: float | None = None,
    max_steps_factor: float = 2.0,
) -> MetricsReport:
    """DTWD and SEA of model rollouts against the full-resolution corpus.

    Each demo's rollout starts at its initial point, Euler-integrated with
    `substeps` fractional steps per model step (default: the stride ratio
    model_dt / demo dt, giving per-original-sample granularity), then
    arc-length resampled to the demo's length. Rollout blowups exclude the
    demo from the aggregates and are listed in the report.
    """
    field_ = FlowField(model, scale=1.0)
    if eps_goal is None:
        eps_goal = default_eps_goal(field_)
    bounds = model.domain_box.inflate(DEFAULT_BOX_INFLATION)
    dtwds, seas, excluded = [], [], []
    for demo in full_set.demos:
        n = len(demo)
        sub = substeps
        if sub is None:
            sub = max(1, round(model.model_dt / demo.dt))
        max_steps = max(2, int(math.ceil(max_steps_factor * n)))
        try:
            result = substep_rollout(
                field_,
                demo.points[0],
                substeps=sub,
                max_steps=max_steps,
                goal=full_set.goal,
                eps_goal=eps_goal,
                bounds=bounds,
            )
        except NumericBlowupError as exc:
            excluded.append((demo.id, str(exc)))
            continue
        if result.states.shape[0] < 2:
            # Started inside the goal ball; compare against the start alone.
            pred = np.repeat(result.states, n, axis=0)
        else:
            try:
                pred = resample_to(result.states, n)
            except InsufficientDataError:
                pred = np.repeat(result.states[:1], n, axis=0)
        dtwds.append(dtwd(demo.points, pred))
        seas.append(sea(demo.points, pred))
    if dtwds:
        mean_dtwd = float(np.mean(dtwds))
        mean_sea = float(np.mean(seas))
        std_dtwd = float(np.std(dtwds))
        std_sea = float(np.std(seas))
    else:
        mean_dtwd = mean_sea = std_dtwd = std_sea = float("nan")
    return MetricsReport(
        per_demo_dtwd=[float(v) for v in dtwds],
        per_demo_sea=[float(v) for v in seas],
        mean_dtwd=mean_dtwd,
        mean_sea=mean_sea,
        std_dtwd=std_dtwd,
        std_sea=std_sea,
        excluded_demos=excluded,
    )
