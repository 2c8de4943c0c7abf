"""Rollouts, the random-initial-condition convergence study, and field grids.

A rollout iterates x <- x + vector_field(x), one full model step at a time
(equivalent to Koopman propagation projected to the state when scale=1), and
stops at the first of: goal reached, domain boundary left, or the step
budget exhausted. Finer Euler sub-stepping is available for comparing
against full-resolution demonstrations.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Box
from .exceptions import DimensionError, NumericBlowupError, SamplingError
from .model import FlowField, divergence_batch, vector_field_batch

DEFAULT_BOX_INFLATION = 0.25
DEFAULT_EPS_GOAL_FRACTION = 0.01
DEFAULT_MAX_STEPS_FACTOR = 50

_REASONS = {
    _kernels.REACHED_GOAL: "reached_goal",
    _kernels.HIT_BOUNDARY: "hit_boundary",
    _kernels.MAX_STEPS: "max_steps",
}


@dataclass(frozen=True)
class Rollout:
    states: np.ndarray  # (k, d), first row is the initial condition
    terminated: str  # "reached_goal" | "hit_boundary" | "max_steps"
    steps_taken: int

    def write_csv(self, path) -> None:
        d = self.states.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step"] + [f"x{i+1}" for i in range(d)])
            for k, state in enumerate(self.states):
                writer.writerow([k] + list(state))


@dataclass(frozen=True)
class ConvergenceReport:
    n_trials: int
    n_reached_goal: int
    n_hit_boundary: int
    n_nonconverged: int
    final_points: np.ndarray
    initial_points: np.ndarray
    seed: int
    box: Box
    eps_goal: float
    eps_exclude: float
    max_steps: int

    def to_json_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "n_reached_goal": self.n_reached_goal,
            "n_hit_boundary": self.n_hit_boundary,
            "n_nonconverged": self.n_nonconverged,
            "seed": self.seed,
            "box": {"lo": self.box.lo.tolist(), "hi": self.box.hi.tolist()},
            "eps_goal": self.eps_goal,
            "eps_exclude": self.eps_exclude,
            "max_steps": self.max_steps,
            "final_points": self.final_points.tolist(),
            "initial_points": self.initial_points.tolist(),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


def default_eps_goal(field: FlowField) -> float:
    diag = field.model.domain_box.diagonal
    return DEFAULT_EPS_GOAL_FRACTION * diag if diag > 0 else 1e-9


def _resolve_bounds(field: FlowField, bounds) -> Box:
    if bounds is None:
        return field.model.domain_box.inflate(DEFAULT_BOX_INFLATION)
    return bounds


def _run_kernel(field: FlowField, x0, substeps, max_steps, goal, eps_goal, bounds: Box):
    model = field.model
    d = model.d
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (d,):
        raise DimensionError(f"initial condition must have dimension {d}")
    goal = np.asarray(goal, dtype=np.float64)
    if goal.shape != (d,):
        raise DimensionError(f"goal must have dimension {d}")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if not (eps_goal > 0):
        raise ValueError("eps_goal must be > 0")

    norm = model.normalization
    if norm is None:
        h = np.ones(d)
        x0_m, goal_m = x0, goal
        lo_m, hi_m = bounds.lo, bounds.hi
    else:
        h = norm.half_extent
        x0_m = norm.to_model(x0)
        goal_m = norm.to_model(goal)
        lo_m = norm.to_model(bounds.lo)
        hi_m = norm.to_model(bounds.hi)

    out = np.empty((max_steps + 1, d))
    n_states, reason, blow_step = _kernels.rollout_kernel(
        np.ascontiguousarray(model.lifting.W),
        np.ascontiguousarray(model.lifting.b),
        np.ascontiguousarray(model.A[:d]),
        np.ascontiguousarray(model.B),
        float(field.scale),
        int(substeps),
        np.ascontiguousarray(x0_m),
        np.ascontiguousarray(goal_m),
        np.ascontiguousarray(h, dtype=np.float64),
        float(eps_goal),
        np.ascontiguousarray(lo_m, dtype=np.float64),
        np.ascontiguousarray(hi_m, dtype=np.float64),
        int(max_steps),
        out,
    )
    if reason == _kernels.NONFINITE:
        raise NumericBlowupError("rollout produced a non-finite state", blow_step)
    states_m = out[:n_states]
    states = states_m if norm is None else norm.to_raw(states_m)
    return Rollout(
        states=np.ascontiguousarray(states),
        terminated=_REASONS[reason],
        steps_taken=n_states - 1,
    )


def rollout(field: FlowField, x0, max_steps, goal, eps_goal=None, bounds=None) -> Rollout:
    """Full-model-step rollout from x0 until goal, boundary, or step budget."""
    bounds = _resolve_bounds(field, bounds)
    if eps_goal is None:
        eps_goal = default_eps_goal(field)
    return _run_kernel(field, x0, 1, max_steps, goal, eps_goal, bounds)


def substep_rollout(
    field: FlowField, x0, substeps, max_steps, goal, eps_goal=None, bounds=None
) -> Rollout:
    """Euler rollout with `substeps` fractional steps per model step.

    Each recorded state advances by 1/substeps of the displacement field;
    max_steps counts substeps, and substeps=1 reduces exactly to rollout.
    """
    bounds = _resolve_bounds(field, bounds)
    if eps_goal is None:
        eps_goal = default_eps_goal(field)
    return _run_kernel(field, x0, substeps, max_steps, goal, eps_goal, bounds)


def convergence_study(
    field: FlowField,
    n: int,
    box: Box | None = None,
    exclusion=None,
    seed: int = 0,
    goal=None,
    eps_goal=None,
    eps_exclude=None,
    max_steps=None,
    max_attempts_per_trial: int = 1000,
) -> ConvergenceReport:
    """Roll out n random initial conditions sampled inside `box`.

    Points within eps_exclude of any exclusion point (training initial
    conditions) are rejected and redrawn. Counts how many trials reach the
    goal, hit the boundary, or fail to terminate within the step budget;
    with a well-trained field every trial falls in the first two bins.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    model = field.model
    if box is None:
        box = model.domain_box.inflate(DEFAULT_BOX_INFLATION)
    if goal is None:
        goal = _goal_fixed_point_guess(field)
    if eps_goal is None:
        eps_goal = default_eps_goal(field)
    if eps_exclude is None:
        eps_exclude = eps_goal
    if max_steps is None:
        # Callers with corpus access should pass 50 x the longest demo length.
        max_steps = 2000
    excl = (
        np.zeros((0, model.d))
        if exclusion is None
        else np.asarray(exclusion, dtype=np.float64).reshape(-1, model.d)
    )
    rng = np.random.default_rng(seed)
    starts = np.empty((n, model.d))
    for i in range(n):
        for _attempt in range(max_attempts_per_trial):
            candidate = rng.uniform(box.lo, box.hi)
            if excl.shape[0] == 0 or np.min(np.linalg.norm(excl - candidate, axis=1)) > eps_exclude:
                starts[i] = candidate
                break
        else:
            raise SamplingError(
                f"could not sample an admissible initial condition after "
                f"{max_attempts_per_trial} attempts (trial {i})"
            )
    n_goal = n_boundary = n_non = 0
    finals = np.empty((n, model.d))
    for i in range(n):
        result = rollout(field, starts[i], max_steps, goal, eps_goal, bounds=box)
        finals[i] = result.states[-1]
        if result.terminated == "reached_goal":
            n_goal += 1
        elif result.terminated == "hit_boundary":
            n_boundary += 1
        else:
            n_non += 1
    return ConvergenceReport(
        n_trials=n,
        n_reached_goal=n_goal,
        n_hit_boundary=n_boundary,
        n_nonconverged=n_non,
        final_points=finals,
        initial_points=starts,
        seed=seed,
        box=box,
        eps_goal=float(eps_goal),
        eps_exclude=float(eps_exclude),
        max_steps=int(max_steps),
    )


def _goal_fixed_point_guess(field: FlowField) -> np.ndarray:
    # Callers normally pass the corpus goal; as a fallback use the domain
    # point with the smallest displacement on a coarse probe grid.
    box = field.model.domain_box
    grid = grid_points(box, 9)
    disp = np.linalg.norm(vector_field_batch(field, grid), axis=1)
    return grid[int(np.argmin(disp))]


def grid_points(box: Box, resolution) -> np.ndarray:
    """Regular grid over the box; resolution is per-axis (int or sequence)."""
    d = box.d
    if np.isscalar(resolution):
        resolution = [int(resolution)] * d
    if len(resolution) != d or any(r < 2 for r in resolution):
        raise ValueError("resolution must be >= 2 on every axis")
    axes = [np.linspace(box.lo[i], box.hi[i], resolution[i]) for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class FieldGrid:
    positions: np.ndarray  # (n, d)
    displacements: np.ndarray  # (n, d)
    divergences: np.ndarray  # (n,)

    def write_csv(self, path) -> None:
        d = self.positions.shape[1]
        header = (
            [f"x{i+1}" for i in range(d)] + [f"u{i+1}" for i in range(d)] + ["divergence"]
        )
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for pos, disp, div in zip(self.positions, self.displacements, self.divergences):
                writer.writerow(list(pos) + list(disp) + [div])


def field_grid(field: FlowField, resolution, box: Box | None = None) -> FieldGrid:
    """Sample displacement and divergence on a regular grid for plotting."""
    if box is None:
        box = field.model.domain_box
    positions = grid_points(box, resolution)
    return FieldGrid(
        positions=positions,
        displacements=vector_field_batch(field, positions),
        divergences=divergence_batch(field, positions),
    )
