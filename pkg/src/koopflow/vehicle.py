"""Differential-drive surface-vehicle simulator tracking a scaled flow field.

Stands in for tank experiments: unicycle kinematics under a heading/speed
velocity controller (PID heading, first-order speed tracking, actuator
clamps) with an ambient flow disturbance. The vehicle queries the field at
its current position for a desired velocity, converts it to a heading and a
speed command, and integrates at a fixed control period. Default gains are
deliberately not tuned.

The field lives in its own (training-data) coordinates; a uniform-scale
affine WorldMap places the field domain inside a tank workspace (default
4.5 m x 3.0 m) and converts displacements to world velocities.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .data import Box
from .exceptions import DimensionError, NumericBlowupError
from .model import FlowField, vector_field
from .rollout import substep_rollout


def wrap_angle(theta: float) -> float:
    """Wrap into (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped == -math.pi:
        wrapped = math.pi
    return wrapped


@dataclass(frozen=True)
class VehicleState:
    position: np.ndarray  # (2,), meters
    heading: float  # radians in (-pi, pi]
    linear_speed: float = 0.0  # m/s
    angular_rate: float = 0.0  # rad/s

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        if pos.shape != (2,):
            raise DimensionError("vehicle position must be 2-D")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True)
class ControllerGains:
    kp: float = 2.0
    ki: float = 0.0
    kd: float = 0.2
    speed_gain: float = 5.0  # 1/s, first-order speed tracking
    max_linear_speed: float = 0.5  # m/s
    max_angular_rate: float = 3.0  # rad/s
    control_period: float = 0.05  # s
    cos_slowdown: bool = True  # cut speed while pointing the wrong way

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd, self.speed_gain) < 0:
            raise ValueError("gains must be >= 0")
        if self.max_linear_speed <= 0 or self.max_angular_rate <= 0 or self.control_period <= 0:
            raise ValueError("limits and control period must be > 0")


@dataclass(frozen=True)
class Disturbance:
    """Ambient flow velocity field (m/s) sampled at the vehicle position."""

    mode: str = "none"  # none | uniform | vortex | sinusoidal
    magnitude: float = 0.0
    direction: tuple = (1.0, 0.0)  # uniform / sinusoidal
    center: tuple = (0.0, 0.0)  # vortex
    period: float = 10.0  # s, sinusoidal

    def __post_init__(self):
        if self.mode not in ("none", "uniform", "vortex", "sinusoidal"):
            raise ValueError(f"unknown disturbance mode {self.mode!r}")
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")

    def velocity(self, position, t: float) -> np.ndarray:
        if self.mode == "none" or self.magnitude == 0.0:
            return np.zeros(2)
        if self.mode == "uniform":
            u = np.asarray(self.direction, dtype=np.float64)
            return self.magnitude * u / max(np.linalg.norm(u), 1e-12)
        if self.mode == "vortex":
            rel = np.asarray(position, dtype=np.float64) - np.asarray(self.center)
            r = np.linalg.norm(rel)
            if r < 1e-9:
                return np.zeros(2)
            tangent = np.array([-rel[1], rel[0]]) / r
            return self.magnitude * tangent
        # sinusoidal-in-time, fixed direction
        u = np.asarray(self.direction, dtype=np.float64)
        u = u / max(np.linalg.norm(u), 1e-12)
        return self.magnitude * math.sin(2.0 * math.pi * t / self.period) * u


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float | None = None


@dataclass(frozen=True)
class Command:
    heading: float
    speed: float
    hold_heading: bool = False  # zero-velocity request: keep current heading


def desired_command(flow: FlowField, position) -> Command:
    """Heading/speed command from the field at a (field-frame) position.

    v_des = vector_field(position) / model_dt; heading = atan2 of its
    components; speed = its norm. A zero v_des yields a hold-heading,
    zero-speed command.
    """
    if flow.model.d != 2:
        raise DimensionError("vehicle tracking needs a 2-D field")
    v_des = vector_field(flow, position) / flow.model.model_dt
    speed = float(np.linalg.norm(v_des))
    if speed == 0.0:
        return Command(heading=0.0, speed=0.0, hold_heading=True)
    return Command(heading=math.atan2(v_des[1], v_des[0]), speed=speed)


def step_vehicle(
    state: VehicleState,
    command: Command,
    gains: ControllerGains,
    dt: float,
    pid: PidState | None = None,
    disturbance: Disturbance | None = None,
    t: float = 0.0,
):
    """One control step of unicycle kinematics; returns (state', pid').

    Heading error drives a PID clamped to the angular-rate limit; speed
    tracks the command first-order (optionally scaled by cos(error) while
    misaligned) and is clamped to [0, max]; position integrates the body
    velocity plus the ambient disturbance at the current position.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    pid = pid or PidState()
    if command.hold_heading:
        error = 0.0
        target_speed = 0.0
    else:
        error = wrap_angle(command.heading - state.heading)
        target_speed = command.speed
    integral = pid.integral + error * dt
    derivative = 0.0 if pid.prev_error is None else (error - pid.prev_error) / dt
    omega = gains.kp * error + gains.ki * integral + gains.kd * derivative
    omega = float(np.clip(omega, -gains.max_angular_rate, gains.max_angular_rate))

    if gains.cos_slowdown:
        target_speed *= max(math.cos(error), 0.0)
    target_speed = float(np.clip(target_speed, 0.0, gains.max_linear_speed))
    alpha = min(1.0, gains.speed_gain * dt)
    speed = state.linear_speed + alpha * (target_speed - state.linear_speed)
    speed = float(np.clip(speed, 0.0, gains.max_linear_speed))

    drift = (
        np.zeros(2) if disturbance is None else disturbance.velocity(state.position, t)
    )
    velocity = speed * np.array([math.cos(state.heading), math.sin(state.heading)]) + drift
    position = state.position + velocity * dt
    heading = wrap_angle(state.heading + omega * dt)
    if not (np.all(np.isfinite(position)) and math.isfinite(heading)):
        raise NumericBlowupError("vehicle state became non-finite", step=-1)
    new_state = VehicleState(
        position=position, heading=heading, linear_speed=speed, angular_rate=omega
    )
    return new_state, PidState(integral=integral, prev_error=error)


@dataclass(frozen=True)
class WorldMap:
    """Uniform-scale affine map between field coordinates and world meters."""

    field_center: np.ndarray
    world_center: np.ndarray
    meters_per_unit: float

    def __post_init__(self):
        object.__setattr__(self, "field_center", np.asarray(self.field_center, dtype=np.float64))
        object.__setattr__(self, "world_center", np.asarray(self.world_center, dtype=np.float64))
        if self.meters_per_unit <= 0:
            raise ValueError("meters_per_unit must be > 0")

    @staticmethod
    def fit(domain: Box, workspace=(4.5, 3.0), margin: float = 0.9) -> "WorldMap":
        """Fit the field domain inside the workspace, preserving aspect."""
        extent = domain.hi - domain.lo
        workspace = np.asarray(workspace, dtype=np.float64)
        scale_candidates = margin * workspace / np.where(extent > 0, extent, 1.0)
        return WorldMap(
            field_center=domain.center,
            world_center=0.5 * workspace,
            meters_per_unit=float(scale_candidates.min()),
        )

    def to_world(self, xf) -> np.ndarray:
        return self.world_center + self.meters_per_unit * (np.asarray(xf) - self.field_center)

    def to_field(self, xw) -> np.ndarray:
        return self.field_center + (np.asarray(xw) - self.world_center) / self.meters_per_unit


@dataclass(frozen=True)
class TrackingReport:
    success: bool
    time_to_goal: float | None
    cross_track_mean: float
    cross_track_p95: float
    cross_track_max: float
    n_steps: int
    final_position: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "success": self.success,
            "time_to_goal": self.time_to_goal,
            "cross_track_mean": self.cross_track_mean,
            "cross_track_p95": self.cross_track_p95,
            "cross_track_max": self.cross_track_max,
            "n_steps": self.n_steps,
            "final_position": self.final_position.tolist(),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


def _polyline_distance(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest segment of a polyline."""
    a = polyline[:-1]
    b = polyline[1:]
    ab = b - a
    denom = np.sum(ab * ab, axis=1)
    denom = np.where(denom > 0, denom, 1.0)
    dists = np.empty(points.shape[0])
    for i, p in enumerate(points):
        t = np.clip(np.sum((p - a) * ab, axis=1) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        dists[i] = np.min(np.linalg.norm(proj - p, axis=1))
    return dists


def simulate_run(
    flow: FlowField,
    gains: ControllerGains,
    disturbance: Disturbance | None,
    x0_world,
    duration: float,
    world_map: WorldMap | None = None,
    goal=None,
    eps_goal: float | None = None,
    initial_heading: float | None = None,
    reference_substeps: int = 10,
):
    """Closed-loop tracking run; returns (trajectory rows, TrackingReport).

    The vehicle starts at x0_world (meters), initially aligned with the
    field unless initial_heading is given, and runs until it reaches the
    goal ball or the duration elapses. Cross-track statistics compare the
    driven path against the reference streamline integrated from the same
    start. Trajectory rows are (t, x, y, theta, v, omega).
    """
    model = flow.model
    if model.d != 2:
        raise DimensionError("vehicle tracking needs a 2-D field")
    if world_map is None:
        world_map = WorldMap.fit(model.domain_box)
    if goal is None:
        raise ValueError("simulate_run needs the corpus goal point (field frame)")
    goal = np.asarray(goal, dtype=np.float64)
    if eps_goal is None:
        diag = model.domain_box.diagonal
        eps_goal = 0.01 * diag if diag > 0 else 1e-9
    eps_world = eps_goal * world_map.meters_per_unit

    x0_world = np.asarray(x0_world, dtype=np.float64)
    x0_field = world_map.to_field(x0_world)
    first_cmd = desired_command(flow, x0_field)
    heading0 = first_cmd.heading if initial_heading is None else initial_heading
    state = VehicleState(position=x0_world, heading=heading0)
    pid = PidState()

    # Reference streamline for cross-track statistics, in world coordinates.
    # Integrated at unit scale: the speed scaling changes the time
    # parameterization, not the path, and unit steps keep Euler error small.
    ref = substep_rollout(
        FlowField(model, scale=1.0),
        x0_field,
        substeps=reference_substeps,
        max_steps=int(500 * reference_substeps),
        goal=goal,
        eps_goal=eps_goal,
        bounds=model.domain_box.inflate(1.0),
    )
    ref_world = np.array([world_map.to_world(p) for p in ref.states])

    dt = gains.control_period
    n_steps = int(math.ceil(duration / dt))
    rows = []
    t = 0.0
    success = False
    time_to_goal = None
    positions = [state.position.copy()]
    for _step in range(n_steps):
        rows.append(
            (t, state.position[0], state.position[1], state.heading, state.linear_speed,
             state.angular_rate)
        )
        if np.linalg.norm(state.position - world_map.to_world(goal)) <= eps_world:
            success = True
            time_to_goal = t
            break
        cmd = desired_command(flow, world_map.to_field(state.position))
        # Field displacements convert to world speeds through the map scale.
        cmd = Command(
            heading=cmd.heading,
            speed=cmd.speed * world_map.meters_per_unit,
            hold_heading=cmd.hold_heading,
        )
        state, pid = step_vehicle(state, cmd, gains, dt, pid, disturbance, t)
        positions.append(state.position.copy())
        t += dt
    else:
        rows.append(
            (t, state.position[0], state.position[1], state.heading, state.linear_speed,
             state.angular_rate)
        )
        if np.linalg.norm(state.position - world_map.to_world(goal)) <= eps_world:
            success = True
            time_to_goal = t

    cross = (
        _polyline_distance(np.asarray(positions), ref_world)
        if ref_world.shape[0] >= 2
        else np.linalg.norm(np.asarray(positions) - ref_world[0], axis=1)
    )
    report = TrackingReport(
        success=success,
        time_to_goal=time_to_goal,
        cross_track_mean=float(np.mean(cross)),
        cross_track_p95=float(np.percentile(cross, 95)),
        cross_track_max=float(np.max(cross)),
        n_steps=len(rows) - 1,
        final_position=state.position.copy(),
    )
    return rows, report


def write_trajectory_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "theta", "v", "omega"])
        writer.writerows(rows)
