"""Deterministic synchronous engine for decentralized motion coordination.

Each tick runs fixed phases: activate pending tasks, rebuild the sensing
graph, run conflict detection for every tracking robot, then (on planning
boundaries) run one coordination round per connected component that
contains a busy robot, re-check stopped robots for re-entry, advance all
plans by one control period, record the trace, and assert global safety.

Robots only ever receive data about neighbors within the sensing radius;
the engine is merely the message fabric and the global observer that
asserts what the robots themselves cannot check (acyclic planning order,
actual collision freedom).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agent import Agent, AgentMode, Lifecycle
from .conflict import build_occupancy
from .intervals import IntervalSet, overlap_within
from .paths import Path
from .planner import (ForbiddenWindow, InfeasibleTaskError, PlanOutcome,
                      PlanRequest, free_cell_mask, goal_cell_set, initial_plan,
                      plan as run_cascade, trajectory_plan)
from .priority import (PriorityContext, PriorityDigraph, check_acyclic,
                       determine_order, earliest_entry_time, find_cycle,
                       topological_stages)
from .profiles import MotionPlan, stationary_plan
from .scenario import Scenario
from .workspace import CellIndex

TRACE_COLUMNS = ("t", "id", "x", "y", "theta", "v", "omega", "F", "tau",
                 "mode", "lifecycle")


def neighbor_graph(positions: dict[int, tuple[float, float]],
                   sensing_radius: float) -> dict[int, set[int]]:
    """Undirected sensing graph: an edge whenever distance <= radius."""
    ids = sorted(positions)
    adj: dict[int, set[int]] = {i: set() for i in ids}
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            pi, pj = positions[i], positions[j]
            if math.hypot(pi[0] - pj[0], pi[1] - pj[1]) <= sensing_radius:
                adj[i].add(j)
                adj[j].add(i)
    return adj


def connected_components(adj: dict[int, set[int]]) -> list[list[int]]:
    seen: set[int] = set()
    comps: list[list[int]] = []
    for root in sorted(adj):
        if root in seen:
            continue
        comp = []
        stack = [root]
        seen.add(root)
        while stack:
            node = stack.pop()
            comp.append(node)
            for nxt in sorted(adj[node]):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        comps.append(sorted(comp))
    return comps


class SafetyViolationError(RuntimeError):
    def __init__(self, t: float, detail: str) -> None:
        super().__init__(f"safety violation at t={t}: {detail}")
        self.t = t
        self.detail = detail


class DeadlockCycleError(RuntimeError):
    """A planning-order cycle, dumped for analysis; must never happen."""

    def __init__(self, t: float, digraph: PriorityDigraph, cycle: list[int]) -> None:
        super().__init__(
            f"planning-order cycle at t={t}: {' -> '.join(map(str, cycle))}; "
            f"edges={sorted(digraph.edges)}")
        self.digraph = digraph
        self.cycle = cycle


@dataclass
class RunResult:
    exit_code: int
    ticks: int
    trace: dict[int, list[tuple]]
    events: list[dict]
    summary: dict


@dataclass
class _RobotCache:
    free_mask: np.ndarray
    goal_cells: set[CellIndex]
    occ: dict[CellIndex, IntervalSet] | None = None
    occ_plan: object = None
    positions: np.ndarray | None = None
    times: np.ndarray | None = None


class Engine:
    """One simulation run over a fixed scenario."""

    def __init__(self, scenario: Scenario) -> None:
        self.sc = scenario
        self.ws = scenario.workspace
        self.grid = self.ws.grid
        self.dt = scenario.dt
        self.dt_plan = scenario.planning_dt
        self.steps_per_plan = int(round(scenario.planning_dt / scenario.dt))
        self.agents: dict[int, Agent] = {}
        self.cache: dict[int, _RobotCache] = {}
        for spec in scenario.robots:
            agent = Agent(
                robot_id=spec.robot_id, base_priority=spec.base_priority,
                footprint_radius=spec.footprint_radius, limits=spec.limits,
                start_state=spec.start, goal=spec.goal,
                activation_time=spec.activation_time)
            agent.plan = stationary_plan(spec.start.x, spec.start.y,
                                         spec.start.theta, 0.0,
                                         self.dt, self.dt_plan)
            self.agents[spec.robot_id] = agent
            self.cache[spec.robot_id] = _RobotCache(
                free_mask=free_cell_mask(self.ws, self.grid, spec.footprint_radius),
                goal_cells=goal_cell_set(self.ws, self.grid, spec.goal,
                                         spec.footprint_radius))
        self.events: list[dict] = []
        self.trace: dict[int, list[tuple]] = {i: [] for i in self.agents}
        self.round_stage_counts: list[int] = []
        self.replan_instants: dict[int, list[float]] = {i: [] for i in self.agents}
        self.conflict_pairs: set[tuple[int, int]] = set()
        self._tick = 0

    # -- event helpers -------------------------------------------------------

    def _log(self, kind: str, t: float, **payload) -> None:
        self.events.append({"kind": kind, "t": round(t, 9), **payload})

    def _set_mode(self, agent: Agent, mode: AgentMode, t: float) -> None:
        if agent.mode is mode:
            return
        self._log("mode", t, robot=agent.robot_id,
                  from_mode=agent.mode.value, to_mode=mode.value)
        agent.set_mode(mode, t)

    # -- occupancy bookkeeping -------------------------------------------------

    def _occ_of(self, rid: int) -> _RobotCache:
        """Full-plan occupancy with permanent tails on the final footprint."""
        cache = self.cache[rid]
        agent = self.agents[rid]
        if cache.occ_plan is agent.plan and cache.occ is not None:
            return cache
        plan: MotionPlan = agent.plan
        times = plan.traj.times
        pts = plan.traj.states[:, :2]
        occ = build_occupancy(self.grid, times, pts, agent.footprint_radius,
                              self.dt, -math.inf, math.inf)
        t_end = float(times[-1])
        fx, fy = plan.final_position
        for cell in self.grid.cells_for_disc(fx, fy, agent.footprint_radius):
            iv = occ.get(cell)
            if iv is None:
                iv = occ[cell] = IntervalSet()
            iv.add(max(t_end - self.dt, float(times[0])), math.inf)
        cache.occ = occ
        cache.occ_plan = agent.plan
        cache.positions = pts
        cache.times = times
        return cache

    def _window_end(self, rid: int, t_c: float) -> float:
        """Constraint window end: first time the robot leaves its current
        sensing ball, +inf when its plan never does (it parks inside)."""
        cache = self._occ_of(rid)
        agent = self.agents[rid]
        px, py = agent.position_at(t_c)
        times = cache.times
        later = times > t_c + 1e-9
        if not np.any(later):
            return math.inf
        pts = cache.positions[later]
        d = np.hypot(pts[:, 0] - px, pts[:, 1] - py)
        out = np.nonzero(d > self.sc.sensing_radius)[0]
        if len(out) == 0:
            return math.inf
        return float(times[later][out[0]])

    def _clipped_cells(self, rid: int, t_c: float, t_hi: float) -> set[CellIndex]:
        occ = self._occ_of(rid).occ
        out = set()
        for cell, iv in occ.items():
            for lo, hi in iv:
                if hi >= t_c and lo <= t_hi:
                    out.add(cell)
                    break
        return out

    # -- per-tick phases -------------------------------------------------------

    def _activate(self, t_c: float) -> None:
        for rid in sorted(self.agents):
            agent = self.agents[rid]
            if (agent.lifecycle is Lifecycle.PASSIVE and not agent.completed
                    and agent.activation_time <= t_c + 1e-9):
                cache = self.cache[rid]
                motion = initial_plan(
                    self.ws, self.grid, agent.state_at(t_c), agent.goal,
                    agent.limits, agent.footprint_radius, t_c, self.dt,
                    self.dt_plan, free_mask=cache.free_mask,
                    goal_cells=cache.goal_cells)
                agent.plan = motion
                agent.lifecycle = Lifecycle.ACTIVE
                self._log("lifecycle", t_c, robot=rid, from_state="Passive",
                          to_state="Active",
                          arrival=round(motion.arrival_time, 9))

    def _detect(self, t_c: float, adj: dict[int, set[int]]) -> None:
        ends = {}
        for rid in sorted(self.agents):
            agent = self.agents[rid]
            if agent.lifecycle is not Lifecycle.ACTIVE or agent.mode is not AgentMode.FREE:
                continue
            if not adj[rid]:
                continue
            my = self._occ_of(rid).occ
            if rid not in ends:
                ends[rid] = self._window_end(rid, t_c)
            fl_i = ends[rid]
            hits: dict[int, dict] = {}
            for j in sorted(adj[rid]):
                their = self._occ_of(j).occ
                shared = my.keys() & their.keys()
                if not shared:
                    continue
                if j not in ends:
                    ends[j] = self._window_end(j, t_c)
                fl_j = ends[j]
                cells = {}
                for cell in sorted(shared):
                    ov = overlap_within(my[cell], t_c, fl_i,
                                        their[cell], t_c, fl_j)
                    if ov is not None:
                        cells[cell] = ov
                if cells:
                    hits[j] = cells
            if hits:
                for j, cells in hits.items():
                    self.conflict_pairs.add((min(rid, j), max(rid, j)))
                    self._log("conflict", t_c, robot=rid, neighbor=j,
                              cells=[list(c) for c in sorted(cells)],
                              overlaps=[[round(cells[c][0], 9),
                                         round(cells[c][1], 9)]
                                        for c in sorted(cells)])
                self._set_mode(agent, AgentMode.BUSY, t_c)

    def _contexts(self, members: list[int], adj: dict[int, set[int]],
                  t_c: float) -> dict[int, PriorityContext]:
        ends = {rid: self._window_end(rid, t_c) for rid in members}
        cells = {rid: self._clipped_cells(rid, t_c, ends[rid]) for rid in members}
        ctxs = {}
        for rid in members:
            agent = self.agents[rid]
            conflict_cells = set()
            for j in adj[rid]:
                conflict_cells |= cells[rid] & cells[j]
            occ = self._occ_of(rid).occ
            entry = math.inf
            for cell in conflict_cells:
                lo = occ[cell].clipped(t_c, ends[rid]).start()
                entry = min(entry, lo)
            ctxs[rid] = PriorityContext(
                robot_id=rid, neighbor_count=len(adj[rid]),
                earliest_entry=entry, base_priority=agent.base_priority,
                lifecycle=agent.lifecycle, mode=agent.mode)
        return ctxs

    def _windows_from(self, rid_from: int, cells: set[CellIndex], t_c: float,
                      t_hi: float) -> list[ForbiddenWindow]:
        occ = self._occ_of(rid_from).occ
        out = []
        for cell in sorted(cells):
            for lo, hi in occ[cell].clipped(t_c, t_hi):
                out.append(ForbiddenWindow(cell, lo, hi))
        return out

    def coordination_round(self, component: list[int], adj: dict[int, set[int]],
                           t_c: float) -> None:
        """Context exchange, planning-order assignment and staged planning."""
        busy = [rid for rid in component
                if self.agents[rid].lifecycle is Lifecycle.ACTIVE
                and self.agents[rid].mode is AgentMode.BUSY]
        if not busy:
            return
        ctxs = self._contexts(component, adj, t_c)
        graph = PriorityDigraph(nodes=list(component))
        orders: dict[int, set[int]] = {}
        for rid in busy:
            before = determine_order(ctxs[rid], [ctxs[j] for j in sorted(adj[rid])])
            orders[rid] = before
            graph.add_order(rid, before)
            self._log("order", t_c, robot=rid, before=sorted(before))
        if not check_acyclic(graph):
            cycle = find_cycle(graph)
            self._log("deadlock", t_c, cycle=cycle, edges=sorted(graph.edges))
            raise DeadlockCycleError(t_c, graph, cycle)
        stages = topological_stages(graph)
        planning_stages = [
            [rid for rid in stage if rid in orders] for stage in stages]
        planning_stages = [s for s in planning_stages if s]
        self.round_stage_counts.append(len(planning_stages))
        self._log("round", t_c, component=list(component),
                  stages=len(planning_stages),
                  order=[list(s) for s in planning_stages])
        for stage in planning_stages:
            for rid in stage:
                self._plan_robot(rid, orders[rid], t_c)

    def _plan_robot(self, rid: int, before: set[int], t_c: float) -> None:
        agent = self.agents[rid]
        cache = self.cache[rid]
        s0, v0, theta = agent.plan.splice_point(t_c)
        position = agent.position_at(t_c)
        remaining = agent.plan.path.remaining_from(s0)
        my_end = self._window_end(rid, t_c)
        my_cells = self._clipped_cells(rid, t_c, my_end)

        fppp_windows: list[ForbiddenWindow] = []
        tpp_windows: list[ForbiddenWindow] = []
        spatial_with: list[int] = []
        for j in sorted(before):
            j_end = self._window_end(j, t_c)
            j_cells = self._clipped_cells(j, t_c, j_end)
            tpp_windows.extend(self._windows_from(j, j_cells, t_c, j_end))
            shared = my_cells & j_cells
            if shared:
                spatial_with.append(j)
                fppp_windows.extend(self._windows_from(j, shared, t_c, j_end))

        old_arrival = agent.plan.arrival_time
        if not fppp_windows and agent.mode is AgentMode.BUSY:
            # no higher-priority spatial conflict: the unchanged plan already
            # complies, so keep it (the fixed-path property guarantees the
            # conflict-free sets stay conflict-free)
            self._set_mode(agent, AgentMode.FREE, t_c)
            self._log("plan", t_c, robot=rid, outcome="FixedPath",
                      changed=False, fppp_ran=False, tpp_ran=False,
                      arrival_before=round(old_arrival, 9),
                      arrival_after=round(old_arrival, 9),
                      constrained_by=spatial_with)
            return

        req = PlanRequest(
            workspace=self.ws, grid=self.grid, limits=agent.limits,
            radius=agent.footprint_radius, goal=agent.goal, t_start=t_c,
            position=position, theta=theta, v0=v0, remaining_path=remaining,
            fppp_windows=fppp_windows, tpp_windows=tpp_windows,
            sensing_center=position, sensing_radius=self.sc.sensing_radius,
            dt=self.dt, dt_plan=self.dt_plan, free_mask=cache.free_mask,
            goal_cells=cache.goal_cells)
        result, mode, info = run_cascade(req)
        if result.motion is not None:
            changed = abs(result.motion.arrival_time - old_arrival) > 1e-9 or \
                len(result.motion.path.waypoints) != len(remaining.waypoints) or \
                not np.allclose(result.motion.path.waypoints, remaining.waypoints)
            agent.plan = result.motion
            if changed:
                self.replan_instants[rid].append(t_c)
        else:
            changed = True
            agent.plan = stationary_plan(position[0], position[1], theta,
                                         t_c, self.dt, self.dt_plan)
            self.replan_instants[rid].append(t_c)
        self._set_mode(agent, mode, t_c)
        self._log("plan", t_c, robot=rid, outcome=result.outcome.value,
                  changed=bool(changed), fppp_ran=info["fppp_ran"],
                  tpp_ran=info["tpp_ran"],
                  arrival_before=round(old_arrival, 9),
                  arrival_after=round(result.motion.arrival_time, 9)
                  if result.motion else None,
                  constrained_by=sorted(before))

    def _emerg_recheck(self, t_c: float, adj: dict[int, set[int]]) -> None:
        for rid in sorted(self.agents):
            agent = self.agents[rid]
            if agent.lifecycle is not Lifecycle.ACTIVE or agent.mode is not AgentMode.EMERG:
                continue
            cache = self.cache[rid]
            position = agent.position_at(t_c)
            theta = agent.state_at(t_c).theta
            windows: list[ForbiddenWindow] = []
            for j in sorted(adj[rid]):
                j_end = self._window_end(j, t_c)
                j_cells = self._clipped_cells(j, t_c, j_end)
                windows.extend(self._windows_from(j, j_cells, t_c, j_end))
            result = trajectory_plan(
                self.ws, self.grid, position, theta, 0.0, None, agent.goal,
                windows, agent.limits, agent.footprint_radius, t_c, position,
                self.sc.sensing_radius, self.dt, self.dt_plan,
                free_mask=cache.free_mask, goal_cells=cache.goal_cells)
            if result.outcome is PlanOutcome.REPLANNED:
                agent.plan = result.motion
                self.replan_instants[rid].append(t_c)
                self._set_mode(agent, AgentMode.FREE, t_c)
                self._log("plan", t_c, robot=rid, outcome="Replanned",
                          changed=True, fppp_ran=False, tpp_ran=True,
                          arrival_before=None,
                          arrival_after=round(result.motion.arrival_time, 9),
                          constrained_by=sorted(adj[rid]))

    def _settle_check(self, t_c: float) -> None:
        for rid in sorted(self.agents):
            agent = self.agents[rid]
            if agent.lifecycle is not Lifecycle.ACTIVE:
                continue
            st0 = agent.state_at(t_c)
            st1 = agent.state_at(t_c + self.dt)
            ok = (st0.v == 0.0 and st0.omega == 0.0 and st1.v == 0.0
                  and st1.omega == 0.0 and agent.footprint_in_goal(t_c)
                  and agent.footprint_in_goal(t_c + self.dt)
                  and agent.mode is AgentMode.FREE)
            if ok:
                agent.settled_ticks += 1
            else:
                agent.settled_ticks = 0
            if ok and agent.settled_ticks >= 1:
                agent.completed = True
                agent.lifecycle = Lifecycle.PASSIVE
                self._log("lifecycle", t_c, robot=rid, from_state="Active",
                          to_state="Passive", completion_time=round(t_c, 9))

    def _record(self, t_c: float) -> None:
        for rid in sorted(self.agents):
            agent = self.agents[rid]
            st = agent.state_at(t_c)
            nxt = agent.state_at(t_c + self.dt)
            if agent.mode is AgentMode.EMERG:
                force = torque = 0.0  # braking outside the drive inputs
            else:
                force = _declamp((nxt.v - st.v) / self.dt, agent.limits.force_max)
                torque = _declamp((nxt.omega - st.omega) / self.dt,
                                  agent.limits.torque_max)
            self.trace[rid].append((
                round(t_c, 9), rid, st.x, st.y, st.theta, st.v, st.omega,
                force, torque, agent.mode.value, agent.lifecycle.value))

    def _assert_safety(self, t_c: float) -> None:
        ids = sorted(self.agents)
        states = {rid: self.agents[rid].state_at(t_c) for rid in ids}
        for a in range(len(ids)):
            ra = self.agents[ids[a]]
            sa = states[ids[a]]
            clearance = self.ws.disc_obstacle_clearance(sa.x, sa.y,
                                                        ra.footprint_radius)
            if clearance < -1e-9:
                self._log("safety", t_c, robot=ids[a], kind="obstacle",
                          clearance=clearance)
                raise SafetyViolationError(
                    t_c, f"robot {ids[a]} overlaps an obstacle by {-clearance:.4f} m")
            for b in range(a + 1, len(ids)):
                rb = self.agents[ids[b]]
                sb = states[ids[b]]
                d = math.hypot(sa.x - sb.x, sa.y - sb.y)
                if d <= ra.footprint_radius + rb.footprint_radius:
                    self._log("safety", t_c, robots=[ids[a], ids[b]],
                              kind="collision", distance=d)
                    raise SafetyViolationError(
                        t_c, f"robots {ids[a]} and {ids[b]} footprints overlap "
                             f"(centers {d:.4f} m apart)")

    # -- main loop -------------------------------------------------------------

    def step(self) -> None:
        t_c = self._tick * self.dt
        self._activate(t_c)
        positions = {rid: self.agents[rid].position_at(t_c)
                     for rid in sorted(self.agents)}
        adj = neighbor_graph(positions, self.sc.sensing_radius)
        self._detect(t_c, adj)
        if self._tick % self.steps_per_plan == 0:
            for comp in connected_components(adj):
                self.coordination_round(comp, adj, t_c)
            self._emerg_recheck(t_c, adj)
        self._settle_check(t_c)
        self._record(t_c)
        self._assert_safety(t_c)
        self._tick += 1

    def run(self, max_time: float | None = None,
            assert_safety: bool = True) -> RunResult:
        horizon = self.sc.max_time if max_time is None else max_time
        n_ticks = int(round(horizon / self.dt))
        exit_code = 3
        violation = None
        try:
            for _ in range(n_ticks):
                self.step()
                if all(a.completed for a in self.agents.values()):
                    exit_code = 0
                    break
            else:
                if all(a.completed for a in self.agents.values()):
                    exit_code = 0
        except SafetyViolationError as exc:
            if assert_safety:
                violation = exc
                exit_code = 2
            else:
                raise
        summary = self._summary(exit_code, violation)
        return RunResult(exit_code=exit_code, ticks=self._tick,
                         trace=self.trace, events=self.events, summary=summary)

    def _summary(self, exit_code: int, violation) -> dict:
        per_robot = {}
        for rid in sorted(self.agents):
            agent = self.agents[rid]
            completion = None
            for ev in self.events:
                if (ev["kind"] == "lifecycle" and ev.get("robot") == rid
                        and ev.get("to_state") == "Passive"):
                    completion = ev["completion_time"]
            per_robot[str(rid)] = {
                "completed": agent.completed,
                "completion_time": completion,
                "replanning_instants": [round(t, 9)
                                        for t in self.replan_instants[rid]],
                "planner_outcomes": [
                    ev["outcome"] for ev in self.events
                    if ev["kind"] == "plan" and ev["robot"] == rid],
            }
        return {
            "exit_code": exit_code,
            "ticks": self._tick,
            "dt": self.dt,
            "seed": self.sc.seed,
            "conflict_pairs": sorted(list(p) for p in self.conflict_pairs),
            "rounds": len(self.round_stage_counts),
            "round_stages": self.round_stage_counts,
            "robots": per_robot,
            "violation": str(violation) if violation else None,
        }


def _declamp(value: float, bound: float) -> float:
    """Strip float dust from a finite-difference input recovery.

    Planned profiles respect the bound in exact arithmetic; division by dt
    can push the recovered value a few ulp past it. Anything further out is
    a real violation and is left untouched for the checks to catch.
    """
    if bound < abs(value) <= bound * (1.0 + 1e-9):
        return math.copysign(bound, value)
    return value


def run_scenario(scenario: Scenario, max_time: float | None = None,
                 assert_safety: bool = True) -> RunResult:
    return Engine(scenario).run(max_time=max_time, assert_safety=assert_safety)
