"""Initial trajectory synthesis and the two-stage conflict replanner.

The planning stack has three entry points:

* ``initial_plan``: grid shortest path plus minimum-time speed profile,
  computed once per robot at task activation, ignoring other robots.
* ``fixed_path_plan``: keep the remaining path, re-time motion along it so
  the footprint stays out of forbidden (cell, time-window) pairs.
* ``trajectory_plan``: replan path and timing together with a
  time-expanded search over grid cells, then re-profile the new path.

``plan`` chains the last two: trajectory planning runs if and only if
fixed-path planning is infeasible, and failing both means an emergency
stop.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentMode
from .dynamics import Limits, RobotState, normalize_angle
from .intervals import IntervalSet
from .paths import Path, snap_runs
from .profiles import (BlockedBox, MotionPlan, ProfileSolution, rotation_time,
                       solve_speed_profile, stationary_plan, synthesize_plan)
from .workspace import CellGrid, CellIndex, Rect, Workspace

_NEIGHBORS8 = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


class PlanOutcome(enum.Enum):
    FIXED_PATH = "FixedPath"
    REPLANNED = "Replanned"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class ForbiddenWindow:
    """One constraint: the footprint must avoid this cell during [t_lo, t_hi]."""

    cell: CellIndex
    t_lo: float
    t_hi: float

    def __post_init__(self) -> None:
        if self.t_hi < self.t_lo:
            raise ValueError(f"empty forbidden window {self}")


@dataclass
class PlanResult:
    outcome: PlanOutcome
    motion: MotionPlan | None = None


class InfeasibleTaskError(RuntimeError):
    """The reach-avoid task itself has no solution in the discrete search space."""


def arc_quantum(limits: Limits, dt_plan: float) -> float:
    """Run-length quantum the speed lattice requires (two arc units)."""
    return limits.force_max * dt_plan * dt_plan


def free_cell_mask(ws: Workspace, grid: CellGrid, radius: float) -> np.ndarray:
    """Cells whose center admits the footprint disc."""
    mask = np.zeros((grid.nx, grid.ny), dtype=bool)
    for ix in range(grid.nx):
        for iy in range(grid.ny):
            cx, cy = grid.cell_center(ix, iy)
            mask[ix, iy] = ws.is_disc_free(cx, cy, radius)
    return mask


def goal_cell_set(ws: Workspace, grid: CellGrid, goal: Rect,
                  radius: float) -> set[CellIndex]:
    """Cells whose centered footprint fits fully inside the goal region."""
    out: set[CellIndex] = set()
    for cell in grid.cells_for_rect(goal):
        cx, cy = grid.cell_center(*cell)
        if goal.contains_disc(cx, cy, radius) and ws.is_disc_free(cx, cy, radius):
            out.add(cell)
    return out


def segment_clear(ws: Workspace, a: tuple[float, float], b: tuple[float, float],
                  radius: float) -> bool:
    """Swept-disc clearance along a segment, sampled with inflation.

    Samples every step along the segment with the disc inflated by half a
    step, which covers the full capsule; conservative, never optimistic.
    """
    dist = math.hypot(b[0] - a[0], b[1] - a[1])
    step = min(0.5 * ws.cell_size, max(2.0 * radius, 0.05))
    n = max(1, int(math.ceil(dist / step)))
    actual = dist / n
    check_r = radius + 0.5 * actual
    for k in range(n + 1):
        f = k / n
        if not ws.is_disc_free(a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), check_r):
            return False
    return True


def polyline_clear(ws: Workspace, pts: np.ndarray, radius: float) -> bool:
    if len(pts) == 1:
        return ws.is_disc_free(pts[0][0], pts[0][1], radius)
    return all(segment_clear(ws, tuple(pts[k]), tuple(pts[k + 1]), radius)
               for k in range(len(pts) - 1))


def _octile(a: CellIndex, b: CellIndex) -> float:
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    return max(dx, dy) + (math.sqrt(2.0) - 1.0) * min(dx, dy)


def grid_shortest_path(grid: CellGrid, free: np.ndarray, start: CellIndex,
                       goals: set[CellIndex]) -> list[CellIndex] | None:
    """Deterministic A* over the 8-connected free-cell graph."""
    if not goals or not free[start]:
        return None
    goal_list = sorted(goals)

    def heuristic(c: CellIndex) -> float:
        return min(_octile(c, g) for g in goal_list)

    dist: dict[CellIndex, float] = {start: 0.0}
    parent: dict[CellIndex, CellIndex] = {}
    seq = 0
    frontier: list[tuple[float, float, int, int, int]] = [
        (heuristic(start), 0.0, start[0], start[1], seq)]
    closed: set[CellIndex] = set()
    while frontier:
        f, g, ix, iy, _ = heapq.heappop(frontier)
        cur = (ix, iy)
        if cur in closed:
            continue
        closed.add(cur)
        if cur in goals:
            path = [cur]
            while cur in parent:
                cur = parent[cur]
                path.append(cur)
            path.reverse()
            return path
        for dx, dy in _NEIGHBORS8:
            nxt = (ix + dx, iy + dy)
            if not grid.is_valid_index(*nxt) or not free[nxt] or nxt in closed:
                continue
            if dx != 0 and dy != 0:
                if not (free[ix + dx, iy] and free[ix, iy + dy]):
                    continue
            step = math.sqrt(2.0) if dx != 0 and dy != 0 else 1.0
            ng = g + step
            if ng < dist.get(nxt, math.inf) - 1e-12:
                dist[nxt] = ng
                parent[nxt] = cur
                seq += 1
                heapq.heappush(frontier, (ng + heuristic(nxt), ng, nxt[0], nxt[1], seq))
    return None


def shortcut_polyline(ws: Workspace, pts: list[tuple[float, float]],
                      radius: float) -> list[tuple[float, float]]:
    """Greedy line-of-sight shortcutting; deterministic."""
    if len(pts) <= 2:
        return list(pts)
    out = [pts[0]]
    k = 0
    while k < len(pts) - 1:
        j = len(pts) - 1
        while j > k + 1 and not segment_clear(ws, pts[k], pts[j], radius):
            j -= 1
        out.append(pts[j])
        k = j
    return out


def windows_to_boxes(path: Path, windows: list[ForbiddenWindow], grid: CellGrid,
                     radius: float, limits: Limits, dt: float,
                     dt_plan: float) -> list[BlockedBox]:
    """Map (cell, window) constraints onto the path's arc coordinate.

    Time padding by one planning step keeps freshly planned motion from
    re-triggering detection against the same occupancy it was planned
    around (occupancy intervals are themselves dilated by one control
    period on each side).
    """
    h = 0.5 * limits.force_max * dt_plan * dt_plan
    step = max(h, 1e-4)
    by_cell: dict[CellIndex, list[ForbiddenWindow]] = {}
    for w in windows:
        by_cell.setdefault(w.cell, []).append(w)
    boxes: list[BlockedBox] = []
    for cell in sorted(by_cell):
        if not grid.is_valid_index(*cell):
            continue
        ranges = path.disc_contact_ranges(grid.cell_box(*cell), radius, step)
        if not ranges:
            continue
        for w in by_cell[cell]:
            t_lo = w.t_lo - dt_plan
            t_hi = w.t_hi + dt_plan if math.isfinite(w.t_hi) else math.inf
            for s_lo, s_hi in ranges:
                boxes.append(BlockedBox(s_lo, s_hi, t_lo, t_hi))
    return boxes


# -- initial planning ---------------------------------------------------------


def initial_plan(ws: Workspace, grid: CellGrid, start_state: RobotState,
                 goal: Rect, limits: Limits, radius: float, t0: float,
                 dt: float, dt_plan: float,
                 free_mask: np.ndarray | None = None,
                 goal_cells: set[CellIndex] | None = None) -> MotionPlan:
    """Single-robot minimum-time plan for the reach-avoid task.

    Raises InfeasibleTaskError when no collision-free route to the goal
    exists on the grid.
    """
    x0, y0 = start_state.x, start_state.y
    if not ws.is_disc_free(x0, y0, radius):
        raise InfeasibleTaskError(f"start ({x0}, {y0}) is not in free space")
    if goal.contains_disc(x0, y0, radius):
        return stationary_plan(x0, y0, start_state.theta, t0, dt, dt_plan)
    free = free_cell_mask(ws, grid, radius) if free_mask is None else free_mask
    goals = goal_cell_set(ws, grid, goal, radius) if goal_cells is None else goal_cells
    if not goals:
        raise InfeasibleTaskError("goal region admits no footprint placement")
    start_cell = grid.index_containing(x0, y0)
    if not free[start_cell]:
        free = free.copy()
        free[start_cell] = True  # the robot is standing there
    cells = grid_shortest_path(grid, free, start_cell, goals)
    if cells is None:
        raise InfeasibleTaskError("no grid route from start to goal")

    if len(cells) == 1:
        raw = [(x0, y0), grid.cell_center(*cells[0])]
    else:
        raw = [(x0, y0)] + [grid.cell_center(*c) for c in cells[1:]]
    quantum = arc_quantum(limits, dt_plan)
    raw_through_center = [(x0, y0)] + [grid.cell_center(*c) for c in cells]
    candidates = [shortcut_polyline(ws, raw, radius), raw, raw_through_center]
    for cand in candidates:
        snapped = snap_runs(np.asarray(cand), quantum)
        if not polyline_clear(ws, snapped, radius):
            continue
        end = snapped[-1]
        if not goal.contains_disc(end[0], end[1], radius):
            continue
        path = Path(snapped)
        sol = solve_speed_profile(path.length, path.corners(),
                                  _leading_turn(path, start_state.theta),
                                  0.0, limits, t0, [], dt_plan)
        if sol is None:
            continue
        return synthesize_plan(path, sol, start_state.theta, limits, dt)
    raise InfeasibleTaskError("no feasible snapped route to the goal")


def _leading_turn(path: Path, theta: float) -> float:
    if path.length <= 0.0 or len(path.headings) == 0:
        return 0.0
    return normalize_angle(path.headings[0] - theta)


# -- fixed-path planning ------------------------------------------------------


def fixed_path_plan(path: Path, windows: list[ForbiddenWindow], limits: Limits,
                    t_c: float, *, theta0: float, v0: float, grid: CellGrid,
                    radius: float, dt: float, dt_plan: float,
                    terminal: str = "rest") -> PlanResult:
    """Re-time motion along the unchanged path around forbidden windows."""
    boxes = windows_to_boxes(path, windows, grid, radius, limits, dt, dt_plan)
    sol = solve_speed_profile(path.length, path.corners(),
                              _leading_turn(path, theta0) if v0 == 0.0 else 0.0,
                              v0, limits, t_c, boxes, dt_plan, terminal=terminal)
    if sol is None:
        return PlanResult(PlanOutcome.INFEASIBLE)
    motion = synthesize_plan(path, sol, theta0, limits, dt)
    return PlanResult(PlanOutcome.FIXED_PATH, motion)


# -- trajectory (re)planning --------------------------------------------------


@dataclass
class SpaceTimeResult:
    cells: list[CellIndex]
    stages: list[int]
    step_time: float
    t_start: float
    arrival_time: float


def build_reservations(windows: list[ForbiddenWindow], grid: CellGrid,
                       radius: float, dt_plan: float) -> dict[CellIndex, IntervalSet]:
    """Per-center reservations: times a footprint at each cell center is forbidden.

    A window on cell w forbids any center whose footprint disc reaches w's
    box; time is padded by one planning step on each side.
    """
    res: dict[CellIndex, IntervalSet] = {}
    for w in windows:
        if not grid.is_valid_index(*w.cell):
            continue
        box = grid.cell_box(*w.cell)
        reach = int(math.ceil((radius + 1e-9) / grid.cell_size)) + 1
        t_lo = w.t_lo - dt_plan
        t_hi = w.t_hi + dt_plan if math.isfinite(w.t_hi) else math.inf
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                c = (w.cell[0] + dx, w.cell[1] + dy)
                if not grid.is_valid_index(*c):
                    continue
                cx, cy = grid.cell_center(*c)
                if box.distance_to_point(cx, cy) <= radius:
                    res.setdefault(c, IntervalSet()).add(t_lo, t_hi)
    return res


def space_time_search(grid: CellGrid, free: np.ndarray,
                      reservations: dict[CellIndex, IntervalSet],
                      start: CellIndex, t_start: float,
                      goals: set[CellIndex], step_time: float,
                      max_stage: int, max_pops: int = 400_000) -> SpaceTimeResult | None:
    """Time-expanded A* with primitives {hold, move to an 8-neighbor}.

    Every primitive lasts one step. A goal cell is accepted only once all
    its reservations have expired, since the robot parks there forever.
    """
    if not goals or not free[start]:
        return None
    goal_list = sorted(goals)
    empty = IntervalSet()

    def res_of(c: CellIndex) -> IntervalSet:
        return reservations.get(c, empty)

    def goal_clear(c: CellIndex) -> float:
        ivs = res_of(c).intervals
        return ivs[-1][1] if ivs else -math.inf

    def blocked(c: CellIndex, n: int) -> bool:
        t_a = t_start + n * step_time
        return res_of(c).clipped(t_a, t_a + step_time).__bool__()

    def heuristic(c: CellIndex) -> int:
        return min(max(abs(c[0] - g[0]), abs(c[1] - g[1])) for g in goal_list)

    if res_of(start).covers(t_start):
        return None
    start_node = (start, 0)
    best: dict[tuple[CellIndex, int], int] = {start_node: 0}
    parent: dict[tuple[CellIndex, int], tuple[CellIndex, int]] = {}
    seq = 0
    frontier = [(heuristic(start), 0, start[0], start[1], seq)]
    pops = 0
    while frontier and pops < max_pops:
        f, n, ix, iy, _ = heapq.heappop(frontier)
        cur = ((ix, iy), n)
        if best.get(cur, math.inf) < n:
            continue
        pops += 1
        cell = cur[0]
        t_arr = t_start + n * step_time
        if cell in goals and t_arr > goal_clear(cell) + 1e-9:
            nodes = [cur]
            while nodes[-1] in parent:
                nodes.append(parent[nodes[-1]])
            nodes.reverse()
            return SpaceTimeResult(cells=[nd[0] for nd in nodes],
                                   stages=[nd[1] for nd in nodes],
                                   step_time=step_time, t_start=t_start,
                                   arrival_time=t_arr)
        if n >= max_stage:
            continue
        for dx, dy in ((0, 0),) + _NEIGHBORS8:
            nxt = (ix + dx, iy + dy)
            if dx != 0 or dy != 0:
                if not grid.is_valid_index(*nxt) or not free[nxt]:
                    continue
                if dx != 0 and dy != 0:
                    if not (free[ix + dx, iy] and free[ix, iy + dy]):
                        continue
                    if blocked((ix + dx, iy), n) or blocked((ix, iy + dy), n):
                        continue
                if blocked(cell, n) or blocked(nxt, n):
                    continue
            else:
                if blocked(cell, n):
                    continue
            node = (nxt, n + 1)
            if n + 1 < best.get(node, math.inf):
                best[node] = n + 1
                parent[node] = cur
                seq += 1
                heapq.heappush(frontier,
                               (n + 1 + heuristic(nxt), n + 1, nxt[0], nxt[1], seq))
    return None


def _collapse(cells: list[CellIndex]) -> list[CellIndex]:
    out = [cells[0]]
    for c in cells[1:]:
        if c != out[-1]:
            out.append(c)
    return out


def trajectory_plan(ws: Workspace, grid: CellGrid, position: tuple[float, float],
                    theta: float, v0: float, old_path: Path | None, goal: Rect,
                    windows: list[ForbiddenWindow], limits: Limits, radius: float,
                    t_c: float, sensing_center: tuple[float, float],
                    sensing_radius: float, dt: float, dt_plan: float,
                    free_mask: np.ndarray | None = None,
                    goal_cells: set[CellIndex] | None = None) -> PlanResult:
    """Full replan: new route via time-expanded search, then re-profiled.

    Only windows on cells inside the sensing ball constrain the plan; the
    robot cannot know about anything farther out. Final compliance comes
    from the fixed-path profiler run on the new polyline with the same
    windows, so the search layer may stay approximate.
    """
    windows = [w for w in windows if grid.is_valid_index(*w.cell)
               and grid.cell_box(*w.cell).distance_to_point(*sensing_center)
               <= sensing_radius]
    free = free_cell_mask(ws, grid, radius) if free_mask is None else free_mask
    goals = goal_cell_set(ws, grid, goal, radius) if goal_cells is None else goal_cells
    if not goals:
        return PlanResult(PlanOutcome.INFEASIBLE)

    quantum = arc_quantum(limits, dt_plan)
    h = 0.5 * quantum
    dv = limits.force_max * dt_plan
    m0 = int(round(v0 / dv))

    # brake to rest along the old path first when still moving; the old
    # plan's own feasibility guarantees the first run is long enough
    brake_time = 0.0
    anchor = position
    if m0 > 0:
        stop_s = m0 * m0 * h
        if old_path is None or len(old_path.headings) == 0:
            return PlanResult(PlanOutcome.INFEASIBLE)
        first_run = float(old_path.cum_s[1])
        if first_run + 1e-9 < stop_s:
            return PlanResult(PlanOutcome.INFEASIBLE)
        anchor = old_path.point_at(stop_s)
        brake_time = m0 * dt_plan

    start_cell = grid.index_containing(*anchor)
    if not free[start_cell]:
        free = free.copy()
        free[start_cell] = True  # the robot is (or stops) there
    reservations = build_reservations(windows, grid, radius, dt_plan)

    v_lat = int(math.floor(limits.v_max / dv + 1e-9)) * dv
    raw_step = math.sqrt(2.0) * grid.cell_size / v_lat
    step_time = math.ceil(raw_step / dt_plan - 1e-9) * dt_plan
    center = grid.cell_center(*start_cell)
    align = math.hypot(center[0] - anchor[0], center[1] - anchor[1])
    turn_allow = rotation_time(math.pi, limits)
    t_astar = t_c + brake_time + turn_allow + (align / v_lat if align > 1e-9 else 0.0)
    t_astar = math.ceil(t_astar / dt_plan - 1e-9) * dt_plan

    finite_ends = [w.t_hi for w in windows if math.isfinite(w.t_hi)]
    tail = max(finite_ends) - t_astar if finite_ends else 0.0
    span = _octile(start_cell, min(goals)) + grid.nx + grid.ny
    max_stage = int(math.ceil(max(0.0, tail) / step_time)) + int(span) + 20

    hit = space_time_search(grid, free, reservations, start_cell, t_astar,
                            goals, step_time, max_stage)
    if hit is None:
        return PlanResult(PlanOutcome.INFEASIBLE)

    route = _collapse(hit.cells)
    if len(route) == 1:
        pts = [grid.cell_center(*route[0])]
    else:
        pts = [grid.cell_center(*c) for c in route[1:]]
    if pts and math.hypot(pts[0][0] - anchor[0], pts[0][1] - anchor[1]) < 1e-9:
        pts = pts[1:]
    raw_tail = [anchor] + pts

    # shortcutting may change which cells are crossed, but the profiler maps
    # windows onto the final geometry, so compliance is re-established; the
    # raw cell route stays as a fallback when the smoothed one cannot be
    # profiled
    for cand in (shortcut_polyline(ws, raw_tail, radius), raw_tail):
        snapped_tail = snap_runs(np.asarray(cand, dtype=float), quantum)
        if not polyline_clear(ws, snapped_tail, radius):
            continue
        end = snapped_tail[-1]
        if not goal.contains_disc(end[0], end[1], radius):
            continue
        if m0 > 0:
            full = np.concatenate([np.asarray([position]), snapped_tail], axis=0)
        else:
            full = snapped_tail
        path = Path(full)
        boxes = windows_to_boxes(path, windows, grid, radius, limits, dt, dt_plan)
        lead = _leading_turn(path, theta) if m0 == 0 else 0.0
        sol = solve_speed_profile(path.length, path.corners(), lead, v0, limits,
                                  t_c, boxes, dt_plan)
        if sol is None:
            continue
        motion = synthesize_plan(path, sol, theta, limits, dt)
        return PlanResult(PlanOutcome.REPLANNED, motion)
    return PlanResult(PlanOutcome.INFEASIBLE)


# -- the planning cascade (fixed-path first, then trajectory) -----------------


@dataclass
class PlanRequest:
    """Everything one robot needs for a coordination-round planning pass."""

    workspace: Workspace
    grid: CellGrid
    limits: Limits
    radius: float
    goal: Rect
    t_start: float
    position: tuple[float, float]
    theta: float
    v0: float
    remaining_path: Path
    fppp_windows: list[ForbiddenWindow]
    tpp_windows: list[ForbiddenWindow]
    sensing_center: tuple[float, float]
    sensing_radius: float
    dt: float
    dt_plan: float
    free_mask: np.ndarray | None = None
    goal_cells: set[CellIndex] | None = None


def plan(req: PlanRequest) -> tuple[PlanResult, AgentMode, dict]:
    """Fixed-path planning first; trajectory planning only on its failure.

    Returns the plan result, the robot's next mode, and a diagnostics dict
    recording which stages ran (used by the event log).
    """
    info = {"fppp_ran": True, "fppp_feasible": False, "tpp_ran": False,
            "tpp_feasible": False}
    fixed = fixed_path_plan(req.remaining_path, req.fppp_windows, req.limits,
                            req.t_start, theta0=req.theta, v0=req.v0,
                            grid=req.grid, radius=req.radius, dt=req.dt,
                            dt_plan=req.dt_plan)
    if fixed.outcome is PlanOutcome.FIXED_PATH:
        info["fppp_feasible"] = True
        return fixed, AgentMode.FREE, info
    info["tpp_ran"] = True
    old_path = req.remaining_path if req.remaining_path.length > 0 else None
    replanned = trajectory_plan(req.workspace, req.grid, req.position, req.theta,
                                req.v0, old_path, req.goal, req.tpp_windows,
                                req.limits, req.radius, req.t_start,
                                req.sensing_center, req.sensing_radius,
                                req.dt, req.dt_plan, free_mask=req.free_mask,
                                goal_cells=req.goal_cells)
    if replanned.outcome is PlanOutcome.REPLANNED:
        info["tpp_feasible"] = True
        return replanned, AgentMode.FREE, info
    return PlanResult(PlanOutcome.INFEASIBLE), AgentMode.EMERG, info
