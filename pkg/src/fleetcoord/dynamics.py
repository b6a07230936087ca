"""Second-order unicycle model: states, inputs, limits, integration, trajectories.

State is (x, y, theta, v, omega) driven by a force-per-unit-mass input and a
torque-per-unit-inertia input:

    x' = v cos(theta),  y' = v sin(theta),  theta' = omega,  v' = F,  omega' = tau

Sampled trajectories use a fixed convention: position is interpolated
linearly between samples while v and omega are piecewise constant, and any
query past the final sample returns the final pose at rest (a finished or
stopped robot behaves as a static obstacle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = (theta + math.pi) % TWO_PI - math.pi
    if wrapped == -math.pi:
        return math.pi
    return wrapped


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float
    v: float
    omega: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "theta", "v", "omega"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite state component {name}")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v, self.omega])


@dataclass(frozen=True)
class ControlInput:
    """Normalized inputs: force per unit mass (m/s^2), torque per unit inertia (rad/s^2)."""

    force: float
    torque: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.force) and math.isfinite(self.torque)):
            raise ValueError("non-finite control input")


@dataclass(frozen=True)
class Limits:
    v_max: float
    omega_max: float
    force_max: float
    torque_max: float

    def __post_init__(self) -> None:
        for name in ("v_max", "omega_max", "force_max", "torque_max"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


def check_limits(state: RobotState, inp: ControlInput, limits: Limits) -> bool:
    """Velocity and input constraints, boundary inclusive."""
    return (abs(state.v) <= limits.v_max
            and abs(state.omega) <= limits.omega_max
            and abs(inp.force) <= limits.force_max
            and abs(inp.torque) <= limits.torque_max)


def _deriv(s: np.ndarray, force: float, torque: float) -> np.ndarray:
    return np.array([s[3] * math.cos(s[2]), s[3] * math.sin(s[2]), s[4], force, torque])


def integrate_step(state: RobotState, inp: ControlInput, dt: float) -> RobotState:
    """One fourth-order Runge-Kutta step of the unicycle dynamics."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    s = state.as_array()
    k1 = _deriv(s, inp.force, inp.torque)
    k2 = _deriv(s + 0.5 * dt * k1, inp.force, inp.torque)
    k3 = _deriv(s + 0.5 * dt * k2, inp.force, inp.torque)
    k4 = _deriv(s + dt * k3, inp.force, inp.torque)
    out = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return RobotState(out[0], out[1], normalize_angle(out[2]), out[3], out[4])


class Trajectory:
    """Uniformly sampled state curve exchanged between robots.

    samples: times[k] = t0 + k * dt strictly increasing, states[k] the 5-dim
    state. Past the last sample the robot holds its final pose at rest.
    """

    __slots__ = ("times", "states", "dt")

    def __init__(self, times: np.ndarray, states: np.ndarray, dt: float) -> None:
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)
        if times.ndim != 1 or states.ndim != 2 or states.shape[1] != 5:
            raise ValueError("trajectory needs times (T,) and states (T, 5)")
        if len(times) != len(states):
            raise ValueError("times and states length mismatch")
        if len(times) > 1:
            gaps = np.diff(times)
            if np.any(gaps <= 0.0) or np.any(np.abs(gaps - dt) > 1e-9):
                raise ValueError("sample times must increase uniformly by dt")
        self.times = times
        self.states = states
        self.dt = float(dt)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def sample_index(self, t: float) -> int:
        """Index of the sample interval containing t (clamped to the ends)."""
        k = int(round((t - self.t0) / self.dt))
        k = min(max(k, 0), len(self.times) - 1)
        # rounding can land one off when t sits between samples
        while k > 0 and self.times[k] > t + 1e-9:
            k -= 1
        while k < len(self.times) - 1 and self.times[k + 1] <= t + 1e-9:
            k += 1
        return k

    def state_at(self, t: float) -> RobotState:
        if t < self.t0 - 1e-9:
            raise ValueError(f"query t={t} precedes trajectory start {self.t0}")
        if t >= self.end_time - 1e-12:
            x, y, theta = self.states[-1, 0], self.states[-1, 1], self.states[-1, 2]
            return RobotState(float(x), float(y), float(theta), 0.0, 0.0)
        k = self.sample_index(t)
        frac = (t - self.times[k]) / self.dt
        x = self.states[k, 0] + frac * (self.states[k + 1, 0] - self.states[k, 0])
        y = self.states[k, 1] + frac * (self.states[k + 1, 1] - self.states[k, 1])
        return RobotState(float(x), float(y), float(self.states[k, 2]),
                          float(self.states[k, 3]), float(self.states[k, 4]))

    def positions_at(self, ts: np.ndarray) -> np.ndarray:
        """Linearly interpolated positions for an array of times (clamped at ends)."""
        ts = np.asarray(ts, dtype=float)
        x = np.interp(ts, self.times, self.states[:, 0])
        y = np.interp(ts, self.times, self.states[:, 1])
        return np.stack([x, y], axis=-1)


class PositionTrajectory:
    """Projection of a trajectory onto the position plane."""

    __slots__ = ("times", "points", "dt")

    def __init__(self, times: np.ndarray, points: np.ndarray, dt: float) -> None:
        times = np.asarray(times, dtype=float)
        points = np.asarray(points, dtype=float)
        if len(times) != len(points):
            raise ValueError("times and points length mismatch")
        self.times = times
        self.points = points
        self.dt = float(dt)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def extended_to(self, t_end: float) -> "PositionTrajectory":
        """Pad with the final position held constant up to at least t_end."""
        if len(self.times) == 0:
            raise ValueError("cannot extend an empty trajectory")
        if t_end <= self.end_time + 1e-12:
            return self
        n_extra = int(math.ceil((t_end - self.end_time) / self.dt - 1e-9))
        extra_t = self.end_time + self.dt * np.arange(1, n_extra + 1)
        extra_p = np.repeat(self.points[-1:, :], n_extra, axis=0)
        return PositionTrajectory(
            np.concatenate([self.times, extra_t]),
            np.concatenate([self.points, extra_p]),
            self.dt,
        )


def project_position(traj: Trajectory) -> PositionTrajectory:
    """Drop everything but (x, y) from each sample."""
    return PositionTrajectory(traj.times.copy(), traj.states[:, :2].copy(), traj.dt)


def first_leave_time(traj: Trajectory | PositionTrajectory,
                     center: tuple[float, float], sensing_radius: float,
                     t_c: float) -> float:
    """First sample time after t_c at which the position exits the closed ball.

    Returns the trajectory's final sample time when the ball is never left
    (a robot settled at its goal is fully described by its final pose).
    """
    if sensing_radius <= 0.0:
        raise ValueError("sensing radius must be positive")
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    if t_c < traj.t0 - 1e-9:
        raise ValueError(f"trajectory starts at {traj.t0}, after query time {t_c}")
    pts = traj.points if isinstance(traj, PositionTrajectory) else traj.states[:, :2]
    later = traj.times > t_c + 1e-9
    if not np.any(later):
        return max(float(traj.times[-1]), t_c)
    d = np.hypot(pts[later, 0] - center[0], pts[later, 1] - center[1])
    outside = np.nonzero(d > sensing_radius)[0]
    if len(outside) == 0:
        return max(float(traj.times[-1]), t_c)
    return float(traj.times[later][outside[0]])
