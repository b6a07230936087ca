"""Speed scheduling along a fixed path on a (distance, speed, time) lattice.

The solver re-times motion along a polyline so the robot's footprint stays
out of forbidden (arc-range x time-range) boxes while respecting speed and
acceleration bounds. Corners carry a mandatory stop: a polyline corner has
unbounded curvature, so the only feasible way through is to brake to zero,
turn in place within the angular limits, and drive on. That restriction
buys exactness: every synthesized trajectory satisfies all limits by
construction, not just within a tolerance.

Lattice closure: with time step ``dt_plan`` and speed step
``dv = F_max * dt_plan``, a step from speed m*dv to m'*dv (|m - m'| <= 1)
advances arc length by (m + m') * h where ``h = F_max * dt_plan^2 / 2``.
Everything lands back on the integer lattice, so dynamic programming over
(arc unit, speed index) per time stage is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Limits, RobotState, Trajectory, normalize_angle
from .paths import Path

_MIN_TURN = 1e-7
_EPS = 1e-9


@dataclass(frozen=True)
class BlockedBox:
    """Forbidden presence: arc positions [s_lo, s_hi] during [t_lo, t_hi]."""

    s_lo: float
    s_hi: float
    t_lo: float
    t_hi: float


def rotation_time(angle: float, limits: Limits) -> float:
    """Minimum time of a rest-to-rest turn in place by |angle|."""
    a = abs(angle)
    if a < _MIN_TURN:
        return 0.0
    peak = math.sqrt(a * limits.torque_max)
    if peak <= limits.omega_max:
        return 2.0 * math.sqrt(a / limits.torque_max)
    return a / limits.omega_max + limits.omega_max / limits.torque_max


def _turn_steps(angle: float, limits: Limits, dt_plan: float) -> int:
    if abs(angle) < _MIN_TURN:
        return 0
    return max(1, int(math.ceil(rotation_time(angle, limits) / dt_plan - _EPS)))


@dataclass
class _CornerRec:
    unit: int
    angles: list[float]
    dwell: int  # planning steps, sum over angles


@dataclass
class ProfileSolution:
    """Forward edge sequence found by the lattice solver.

    Edges: ("turn", steps, angle), ("move", m_from, m_to), ("wait",).
    """

    t0: float
    dt_plan: float
    h: float
    dv: float
    edges: list[tuple]
    arrival_stage: int
    arrival_time: float
    terminal: str


class _LatticeProblem:
    def __init__(self, length: float, corners: list[tuple[float, float]],
                 leading_turn: float, v0: float, limits: Limits, t0: float,
                 boxes: list[BlockedBox], dt_plan: float, terminal: str,
                 horizon: float | None, max_stages: int) -> None:
        self.limits = limits
        self.t0 = t0
        self.dt_plan = dt_plan
        self.terminal = terminal
        self.dv = limits.force_max * dt_plan
        self.h = 0.5 * limits.force_max * dt_plan * dt_plan
        self.M = int(math.floor(limits.v_max / self.dv + _EPS))
        if self.M < 1:
            raise ValueError(
                f"planning step {dt_plan} too coarse: speed lattice is empty "
                f"(v_max={limits.v_max}, F_max={limits.force_max})")
        self.length = max(0.0, length)
        self.K = int(round(self.length / self.h))
        if abs(self.K * self.h - self.length) > 1e-6:
            raise ValueError(
                f"path length {self.length} is not on the arc lattice "
                f"(pitch {self.h}); snap the polyline first")
        self.s_of = np.minimum(np.arange(self.K + 1) * self.h, self.length)

        m0 = int(round(v0 / self.dv))
        if abs(m0 * self.dv - v0) > 1e-6 or m0 < 0 or m0 > self.M:
            raise ValueError(f"initial speed {v0} is not on the lattice (dv={self.dv})")
        self.m0 = m0
        self.lead_steps = _turn_steps(leading_turn, limits, dt_plan)
        self.leading_turn = leading_turn if self.lead_steps > 0 else 0.0
        if self.lead_steps > 0 and m0 != 0:
            raise ValueError("cannot turn in place while moving (v0 must be 0)")
        if self.K == 0 and m0 != 0:
            raise ValueError("nonzero initial speed on a zero-length path")

        # corner records; a corner at or past the path end needs no stop
        recs: dict[int, _CornerRec] = {}
        for s, ang in corners:
            steps = _turn_steps(ang, limits, dt_plan)
            if steps == 0:
                continue
            unit = int(round(s / self.h))
            if abs(unit * self.h - s) > 1e-6:
                raise ValueError(
                    f"corner at s={s} is off the arc lattice (pitch {self.h})")
            if unit >= self.K or unit <= 0:
                continue
            rec = recs.get(unit)
            if rec is None:
                recs[unit] = _CornerRec(unit, [ang], steps)
            else:
                rec.angles.append(ang)
                rec.dwell += steps
        self.corners = {u: recs[u] for u in sorted(recs)}

        # rest-to-rest hops cover an even number of units, so every stop
        # boundary must sit at the right parity or it is unreachable
        boundaries = sorted(self.corners)
        if self.K > 0 and terminal == "rest":
            boundaries.append(self.K)
        prev = 0
        prev_parity = m0 % 2
        for u in boundaries:
            if (u - prev) % 2 != prev_parity:
                raise ValueError(
                    f"run of {u - prev} arc units between stops at {prev} and {u} "
                    f"has unreachable parity (entry speed index {prev_parity})")
            prev = u
            prev_parity = 0
        # the path end behaves like a corner under a rest terminal: moves may
        # neither cross it nor land on it at speed
        self.stop_units = set(self.corners)
        if terminal == "rest":
            self.stop_units.add(self.K)

        self.boxes = list(boxes)
        self._b_slo = np.array([b.s_lo for b in boxes]) if boxes else np.zeros(0)
        self._b_shi = np.array([b.s_hi for b in boxes]) if boxes else np.zeros(0)
        self._b_tlo = np.array([b.t_lo for b in boxes]) if boxes else np.zeros(0)
        self._b_thi = np.array([b.t_hi for b in boxes]) if boxes else np.zeros(0)

        self.goal_clear = -math.inf
        if terminal == "rest":
            for b in boxes:
                if b.s_lo - _EPS <= self.length <= b.s_hi + _EPS:
                    self.goal_clear = max(self.goal_clear, b.t_hi)

        if horizon is None:
            finite_ends = [b.t_hi for b in boxes if math.isfinite(b.t_hi)]
            tail = max(finite_ends) - t0 if finite_ends else 0.0
            # rest-to-rest time per inter-corner run, not plain length/v_max
            free = (sum(r.dwell for r in self.corners.values()) * dt_plan
                    + self.lead_steps * dt_plan)
            run_edges = [0] + sorted(self.corners) + [self.K]
            for a, b in zip(run_edges[:-1], run_edges[1:]):
                run_len = (b - a) * self.h
                v_peak = math.sqrt(run_len * limits.force_max)
                if v_peak <= limits.v_max:
                    free += 2.0 * math.sqrt(run_len / limits.force_max)
                else:
                    free += run_len / limits.v_max + limits.v_max / limits.force_max
            horizon = max(0.0, tail) + free + 5.0
        self.n_max = min(max_stages, int(math.ceil(horizon / dt_plan)) + 2)

        # corner-crossing source masks per move distance dk
        self._cross: dict[int, list[tuple[int, int]]] = {}
        for dk in range(1, 2 * self.M + 1):
            slices = []
            for u in self.stop_units:
                k_lo = max(0, u - dk + 1)
                k_hi = min(self.K - dk, u - 1)
                if k_lo <= k_hi:
                    slices.append((k_lo, k_hi))
            self._cross[dk] = slices

    # -- blocking tests ----------------------------------------------------

    def stage_time(self, n: int) -> float:
        return self.t0 + n * self.dt_plan

    def _active_boxes(self, t_lo: float, t_hi: float) -> np.ndarray:
        if not self.boxes:
            return np.zeros(0, dtype=bool)
        return (self._b_tlo <= t_hi + _EPS) & (self._b_thi >= t_lo - _EPS)

    def blocked_source_ranges(self, n: int, dk: int) -> list[tuple[int, int]]:
        """Source-k ranges whose move of dk units at stage n hits a box."""
        t_lo = self.stage_time(n)
        act = self._active_boxes(t_lo, t_lo + self.dt_plan)
        out = []
        for b in np.nonzero(act)[0]:
            j_lo = int(np.searchsorted(self.s_of, self._b_slo[b] - _EPS, side="left"))
            k_lo = max(0, j_lo - dk)
            k_hi = int(np.searchsorted(self.s_of, self._b_shi[b] + _EPS, side="right")) - 1
            k_hi = min(k_hi, self.K - dk)
            if k_lo <= k_hi:
                out.append((k_lo, k_hi))
        return out

    def edge_blocked(self, n: int, k: int, dk: int) -> bool:
        """Scalar twin of blocked_source_ranges for reconstruction/oracles."""
        t_lo = self.stage_time(n)
        s_a = self.s_of[k]
        s_b = self.s_of[k + dk]
        for b in self.boxes:
            if (b.t_lo <= t_lo + self.dt_plan + _EPS and b.t_hi >= t_lo - _EPS
                    and s_b >= b.s_lo - _EPS and s_a <= b.s_hi + _EPS):
                return True
        return False

    def dwell_blocked(self, n_from: int, unit: int, steps: int) -> bool:
        """Presence at a stop point over [t(n_from), t(n_from + steps)]."""
        t_lo = self.stage_time(n_from)
        t_hi = t_lo + steps * self.dt_plan
        s = self.s_of[unit]
        for b in self.boxes:
            if (b.t_lo <= t_hi + _EPS and b.t_hi >= t_lo - _EPS
                    and b.s_lo - _EPS <= s <= b.s_hi + _EPS):
                return True
        return False

    def crossing_corner(self, k: int, dk: int) -> bool:
        return any(k < u < k + dk for u in self.stop_units)

    # -- forward search ------------------------------------------------------

    def solve(self) -> tuple[int, dict[int, np.ndarray]] | None:
        if self.terminal == "rest" and self.goal_clear == math.inf:
            return None
        if self.lead_steps > 0 and self.dwell_blocked(0, 0, self.lead_steps):
            return None
        reached: dict[int, np.ndarray] = {}

        def layer(n: int) -> np.ndarray:
            arr = reached.get(n)
            if arr is None:
                arr = reached[n] = np.zeros((self.K + 1, self.M + 1), dtype=bool)
            return arr

        layer(self.lead_steps)[0, self.m0] = True
        max_stage_seen = self.lead_steps

        for n in range(self.lead_steps, self.n_max + 1):
            cur = reached.get(n)
            if cur is None or not cur.any():
                if n >= max_stage_seen:
                    return None
                continue
            t_n = self.stage_time(n)
            if self.terminal == "rest":
                if cur[self.K, 0] and t_n > self.goal_clear + _EPS:
                    return n, reached
            else:
                if cur[self.K, :].any():
                    return n, reached
            if n == self.n_max:
                break

            block_cache: dict[int, list[tuple[int, int]]] = {}
            for m in range(self.M + 1):
                col = cur[:, m]
                if not col.any():
                    continue
                for mp in (m - 1, m, m + 1):
                    if mp < 0 or mp > self.M:
                        continue
                    dk = m + mp
                    if dk not in block_cache:
                        block_cache[dk] = self.blocked_source_ranges(n, dk)
                    if dk == 0:
                        ok = col.copy()
                        for k_lo, k_hi in block_cache[0]:
                            ok[k_lo:k_hi + 1] = False
                        if ok.any():
                            nxt = layer(n + 1)
                            nxt[:, 0] |= ok
                            max_stage_seen = max(max_stage_seen, n + 1)
                        continue
                    if dk > self.K:
                        continue
                    ok = np.zeros(self.K + 1, dtype=bool)
                    ok[:self.K - dk + 1] = col[:self.K - dk + 1]
                    for k_lo, k_hi in self._cross[dk]:
                        ok[k_lo:k_hi + 1] = False
                    for k_lo, k_hi in block_cache[dk]:
                        ok[k_lo:k_hi + 1] = False
                    # stop points only accept fused arrivals at speed zero
                    for u in self.stop_units:
                        src = u - dk
                        if 0 <= src <= self.K - dk and ok[src]:
                            ok[src] = False
                            if mp == 0:
                                dwell = self.corners[u].dwell if u in self.corners else 0
                                if dwell == 0 or not self.dwell_blocked(n + 1, u, dwell):
                                    fut = layer(n + 1 + dwell)
                                    fut[u, 0] = True
                                    max_stage_seen = max(max_stage_seen, n + 1 + dwell)
                    if ok.any():
                        nxt = layer(n + 1)
                        nxt[dk:, mp] |= ok[:self.K + 1 - dk]
                        max_stage_seen = max(max_stage_seen, n + 1)
        return None

    # -- reconstruction ------------------------------------------------------

    def reconstruct(self, arrival: int, reached: dict[int, np.ndarray]) -> list[tuple]:
        if self.terminal == "rest":
            m_goal = 0
        else:
            m_goal = int(np.nonzero(reached[arrival][self.K, :])[0][0])
        n, k, m = arrival, self.K, m_goal
        rev: list[tuple] = []
        root = (self.lead_steps, 0, self.m0)

        def has(nn: int, kk: int, mm: int) -> bool:
            arr = reached.get(nn)
            return arr is not None and bool(arr[kk, mm])

        while (n, k, m) != root:
            stepped = False
            # fused stop-point arrival: decelerate 1 -> 0 into the point, then dwell
            if k in self.stop_units and m == 0 and k >= 1:
                dwell = self.corners[k].dwell if k in self.corners else 0
                n_prev = n - 1 - dwell
                if (n_prev >= self.lead_steps and has(n_prev, k - 1, 1)
                        and not self.crossing_corner(k - 1, 1)
                        and not self.edge_blocked(n_prev, k - 1, 1)
                        and (dwell == 0 or not self.dwell_blocked(n_prev + 1, k, dwell))):
                    if dwell > 0:
                        for ang in reversed(self.corners[k].angles):
                            rev.append(("turn", _turn_steps(ang, self.limits, self.dt_plan), ang))
                    rev.append(("move", 1, 0))
                    n, k, m = n_prev, k - 1, 1
                    stepped = True
            if not stepped and k not in self.stop_units:
                for m_prev in (m + 1, m, m - 1):
                    if m_prev < 0 or m_prev > self.M:
                        continue
                    dk = m_prev + m
                    if dk == 0 or dk > k:
                        continue
                    k_prev = k - dk
                    if not has(n - 1, k_prev, m_prev):
                        continue
                    if self.crossing_corner(k_prev, dk):
                        continue
                    if self.edge_blocked(n - 1, k_prev, dk):
                        continue
                    rev.append(("move", m_prev, m))
                    n, k, m = n - 1, k_prev, m_prev
                    stepped = True
                    break
            if not stepped and m == 0:
                if has(n - 1, k, 0) and not self.edge_blocked(n - 1, k, 0):
                    rev.append(("wait",))
                    n, k, m = n - 1, k, 0
                    stepped = True
            if not stepped:
                raise RuntimeError("profile reconstruction failed (internal error)")
        if self.lead_steps > 0:
            rev.append(("turn", self.lead_steps, self.leading_turn))
        rev.reverse()
        return rev


def solve_speed_profile(length: float, corners: list[tuple[float, float]],
                        leading_turn: float, v0: float, limits: Limits,
                        t0: float, boxes: list[BlockedBox], dt_plan: float,
                        terminal: str = "rest", horizon: float | None = None,
                        max_stages: int = 5000) -> ProfileSolution | None:
    """Minimum-arrival-time speed schedule, or None when infeasible.

    ``terminal`` is "rest" (stop at the path end and stay) or "free" (reach
    the end at any speed).
    """
    if terminal not in ("rest", "free"):
        raise ValueError(f"unknown terminal condition {terminal!r}")
    prob = _LatticeProblem(length, corners, leading_turn, v0, limits, t0,
                           boxes, dt_plan, terminal, horizon, max_stages)
    hit = prob.solve()
    if hit is None:
        return None
    arrival, reached = hit
    edges = prob.reconstruct(arrival, reached)
    return ProfileSolution(t0=t0, dt_plan=dt_plan, h=prob.h, dv=prob.dv,
                           edges=edges, arrival_stage=arrival,
                           arrival_time=t0 + arrival * dt_plan,
                           terminal=terminal)


# -- trajectory synthesis ----------------------------------------------------


def _turn_samples(angle: float, total_steps: int, limits: Limits,
                  dt_plan: float, dt: float) -> np.ndarray:
    """Per-dt angular speed samples turning by exactly ``angle`` in the dwell.

    Samples are window averages of a trapezoidal rate profile, so the
    per-sample rate stays within omega_max, consecutive samples differ by at
    most torque_max*dt, and the discrete integral telescopes to the exact
    angle.
    """
    n_sub = int(round(total_steps * dt_plan / dt))
    a = abs(angle)
    if a < _MIN_TURN or n_sub == 0:
        return np.zeros(n_sub)
    big_t = n_sub * dt
    tau = limits.torque_max
    disc = big_t * big_t * tau * tau - 4.0 * a * tau
    if disc < 0.0:
        disc = 0.0  # dwell was rounded up from the minimum, so only float dust
    peak = 0.5 * (big_t * tau - math.sqrt(disc))
    peak = min(peak, limits.omega_max)
    t_ramp = peak / tau

    def integral(t: float) -> float:
        t = min(max(t, 0.0), big_t)
        if t <= t_ramp:
            return 0.5 * tau * t * t
        if t <= big_t - t_ramp:
            return 0.5 * peak * t_ramp + peak * (t - t_ramp)
        tail = big_t - t
        return a - 0.5 * tau * tail * tail

    ts = dt * np.arange(n_sub + 1)
    theta = np.array([integral(float(t)) for t in ts])
    omega = np.diff(theta) / dt
    omega = np.clip(omega, 0.0, limits.omega_max)
    return math.copysign(1.0, angle) * omega


@dataclass
class MotionPlan:
    """A path plus its executed timing, sampled at the control period."""

    t0: float
    dt: float
    dt_plan: float
    path: Path
    theta0: float
    traj: Trajectory
    s_of_t: np.ndarray
    v_nominal: np.ndarray
    arrival_time: float
    changed_at: float | None = field(default=None)

    def state_at(self, t: float) -> RobotState:
        return self.traj.state_at(t)

    def position_at(self, t: float) -> tuple[float, float]:
        if t >= self.traj.end_time:
            return (float(self.traj.states[-1, 0]), float(self.traj.states[-1, 1]))
        s = self.traj.state_at(t)
        return (s.x, s.y)

    def sample_index(self, t: float) -> int:
        return self.traj.sample_index(t)

    @property
    def final_position(self) -> tuple[float, float]:
        return (float(self.traj.states[-1, 0]), float(self.traj.states[-1, 1]))

    def splice_point(self, t: float) -> tuple[float, float, float]:
        """(arc position, lattice speed, heading) at a plan-step boundary."""
        if t >= self.traj.end_time - 1e-9:
            return (float(self.s_of_t[-1]), 0.0, float(self.traj.states[-1, 2]))
        k = self.sample_index(t)
        return (float(self.s_of_t[k]), float(self.v_nominal[k]),
                float(self.traj.states[k, 2]))


def stationary_plan(x: float, y: float, theta: float, t0: float, dt: float,
                    dt_plan: float) -> MotionPlan:
    """A plan that parks at one pose forever."""
    traj = Trajectory(np.array([t0]), np.array([[x, y, theta, 0.0, 0.0]]), dt)
    return MotionPlan(t0=t0, dt=dt, dt_plan=dt_plan, path=Path([(x, y)]),
                      theta0=theta, traj=traj, s_of_t=np.zeros(1),
                      v_nominal=np.zeros(1), arrival_time=t0)


def synthesize_plan(path: Path, solution: ProfileSolution, theta_start: float,
                    limits: Limits, dt: float) -> MotionPlan:
    """Expand a lattice solution into an exactly limit-feasible trajectory.

    Speed samples are window averages of the continuous bang-bang profile,
    which keeps |v| <= v_max, consecutive differences within F_max*dt, and
    arc progress exactly on the lattice. Headings snap to the path segments
    after each in-place turn, so no angular drift accumulates.
    """
    dt_plan = solution.dt_plan
    r = int(round(dt_plan / dt))
    if abs(r * dt - dt_plan) > 1e-9 or r < 1:
        raise ValueError(f"dt_plan {dt_plan} must be an integer multiple of dt {dt}")
    dv, h = solution.dv, solution.h

    ts: list[float] = []
    xs: list[float] = []
    ys: list[float] = []
    thetas: list[float] = []
    vs: list[float] = []
    omegas: list[float] = []
    s_arr: list[float] = []
    v_nom: list[float] = []

    k_units = 0
    s_cur = 0.0
    theta = normalize_angle(theta_start)
    t_index = 0
    run_heading = path.heading_at(min(h * 0.5, path.length)) if path.length > 0 else theta

    def emit(x: float, y: float, th: float, v: float, om: float,
             s: float, v_inst: float) -> None:
        nonlocal t_index
        ts.append(solution.t0 + t_index * dt)
        xs.append(x)
        ys.append(y)
        thetas.append(th)
        vs.append(v)
        omegas.append(om)
        s_arr.append(s)
        v_nom.append(v_inst)
        t_index += 1

    for edge in solution.edges:
        if edge[0] == "turn":
            _, steps, _ang = edge
            if path.length > 0 and s_cur < path.length - 1e-9:
                target = path.heading_at(min(s_cur + 1e-9, path.length))
            else:
                target = theta
            angle = normalize_angle(target - theta)
            omega_samples = _turn_samples(angle, steps, limits, dt_plan, dt)
            x, y = path.point_at(s_cur)
            for om in omega_samples:
                emit(x, y, theta, 0.0, float(om), s_cur, 0.0)
                theta = theta + float(om) * dt
            theta = normalize_angle(target) if abs(angle) >= _MIN_TURN else theta
            run_heading = theta
        elif edge[0] == "wait":
            x, y = path.point_at(s_cur)
            for _ in range(r):
                emit(x, y, theta, 0.0, 0.0, s_cur, 0.0)
        elif edge[0] == "move":
            _, m, mp = edge
            v_a = m * dv
            acc = (mp - m) * dv / dt_plan
            s_edge_start = s_cur
            for j in range(r):
                t_a = j * dt
                t_b = (j + 1) * dt
                dist = (v_a * t_b + 0.5 * acc * t_b * t_b) - (v_a * t_a + 0.5 * acc * t_a * t_a)
                v_win = dist / dt
                v_inst = v_a + acc * t_a
                x, y = path.point_at(s_cur)
                emit(x, y, theta, min(v_win, limits.v_max), 0.0, s_cur, v_inst)
                s_cur += dist
            k_units += m + mp
            s_cur = min(k_units * h, path.length)
        else:
            raise ValueError(f"unknown edge kind {edge[0]!r}")

    # terminal sample: at rest for "rest", at the final lattice speed otherwise
    x, y = path.point_at(s_cur)
    v_end = 0.0
    if solution.terminal == "free" and solution.edges:
        last = solution.edges[-1]
        if last[0] == "move":
            v_end = last[2] * dv
    emit(x, y, theta, v_end, 0.0, s_cur, v_end)

    traj = Trajectory(np.array(ts), np.stack(
        [np.array(xs), np.array(ys), np.array(thetas), np.array(vs), np.array(omegas)],
        axis=1), dt)
    return MotionPlan(t0=solution.t0, dt=dt, dt_plan=dt_plan, path=path,
                      theta0=normalize_angle(theta_start), traj=traj,
                      s_of_t=np.array(s_arr), v_nominal=np.array(v_nom),
                      arrival_time=solution.arrival_time)
