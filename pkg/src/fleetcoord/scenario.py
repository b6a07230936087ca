"""Scenario documents: the JSON schema, validation, and round-tripping.

A scenario fully determines a run: workspace geometry, timing constants,
sensing radius, and one entry per robot. Validation reports the offending
field path so bad files fail loudly and precisely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .dynamics import Limits, RobotState
from .workspace import Rect, Workspace


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class RobotSpec:
    robot_id: int
    base_priority: int
    footprint_radius: float
    limits: Limits
    start: RobotState
    goal: Rect
    activation_time: float = 0.0


@dataclass(frozen=True)
class Scenario:
    workspace: Workspace
    dt: float
    planning_dt: float
    sensing_radius: float
    max_time: float
    seed: int
    robots: tuple[RobotSpec, ...]


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ScenarioError(f"{path}.{key}", "missing required field")
    return obj[key]


def _rect(raw, path: str) -> Rect:
    if (not isinstance(raw, (list, tuple)) or len(raw) != 4
            or not all(isinstance(v, (int, float)) for v in raw)):
        raise ScenarioError(path, "expected [x0, y0, x1, y1]")
    try:
        return Rect(float(raw[0]), float(raw[1]), float(raw[2]), float(raw[3]))
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from exc


def _number(raw, path: str, positive: bool = False) -> float:
    if not isinstance(raw, (int, float)) or isinstance(raw, bool) or not math.isfinite(raw):
        raise ScenarioError(path, f"expected a finite number, got {raw!r}")
    if positive and raw <= 0:
        raise ScenarioError(path, f"must be strictly positive, got {raw}")
    return float(raw)


def load_scenario(text: str) -> Scenario:
    """Parse and fully validate a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("$", "top level must be an object")

    ws_doc = _need(doc, "workspace", "$")
    bounds = _rect(_need(ws_doc, "bounds", "$.workspace"), "$.workspace.bounds")
    cell_size = _number(_need(ws_doc, "cell_size", "$.workspace"),
                        "$.workspace.cell_size", positive=True)
    obstacles = []
    for k, raw in enumerate(ws_doc.get("obstacles", [])):
        obstacles.append(_rect(raw, f"$.workspace.obstacles[{k}]"))
    try:
        workspace = Workspace(bounds, tuple(obstacles), cell_size)
    except ValueError as exc:
        raise ScenarioError("$.workspace", str(exc)) from exc

    dt = _number(_need(doc, "dt", "$"), "$.dt", positive=True)
    planning_dt = _number(_need(doc, "planning_dt", "$"), "$.planning_dt", positive=True)
    ratio = planning_dt / dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ScenarioError("$.planning_dt",
                            f"must be a positive integer multiple of dt={dt}")
    sensing_radius = _number(_need(doc, "sensing_radius", "$"),
                             "$.sensing_radius", positive=True)
    max_time = _number(_need(doc, "max_time", "$"), "$.max_time", positive=True)
    seed_raw = doc.get("seed", 0)
    if not isinstance(seed_raw, int) or isinstance(seed_raw, bool):
        raise ScenarioError("$.seed", f"expected an integer, got {seed_raw!r}")

    robots_doc = _need(doc, "robots", "$")
    if not isinstance(robots_doc, list) or not robots_doc:
        raise ScenarioError("$.robots", "expected a non-empty array")

    robots: list[RobotSpec] = []
    ids: dict[int, int] = {}
    prios: dict[int, int] = {}
    for k, rdoc in enumerate(robots_doc):
        path = f"$.robots[{k}]"
        rid = _need(rdoc, "id", path)
        if not isinstance(rid, int) or isinstance(rid, bool):
            raise ScenarioError(f"{path}.id", f"expected an integer, got {rid!r}")
        if rid in ids:
            raise ScenarioError(f"{path}.id",
                                f"duplicate robot id {rid} (also robots[{ids[rid]}])")
        ids[rid] = k
        prio = _need(rdoc, "base_priority", path)
        if not isinstance(prio, int) or isinstance(prio, bool):
            raise ScenarioError(f"{path}.base_priority", "expected an integer")
        if prio in prios:
            raise ScenarioError(
                f"{path}.base_priority",
                f"duplicate base priority {prio} (also robots[{prios[prio]}])")
        prios[prio] = k
        radius = _number(_need(rdoc, "footprint_radius", path),
                         f"{path}.footprint_radius")
        if radius < 0:
            raise ScenarioError(f"{path}.footprint_radius", "must be >= 0")
        if radius >= sensing_radius:
            raise ScenarioError(f"{path}.footprint_radius",
                                f"must be smaller than sensing radius {sensing_radius}")
        lim_doc = _need(rdoc, "limits", path)
        try:
            limits = Limits(
                v_max=_number(_need(lim_doc, "v_max", f"{path}.limits"),
                              f"{path}.limits.v_max", positive=True),
                omega_max=_number(_need(lim_doc, "omega_max", f"{path}.limits"),
                                  f"{path}.limits.omega_max", positive=True),
                force_max=_number(_need(lim_doc, "force_max", f"{path}.limits"),
                                  f"{path}.limits.force_max", positive=True),
                torque_max=_number(_need(lim_doc, "torque_max", f"{path}.limits"),
                                   f"{path}.limits.torque_max", positive=True),
            )
        except ValueError as exc:
            raise ScenarioError(f"{path}.limits", str(exc)) from exc
        st_doc = _need(rdoc, "start", path)
        sx = _number(_need(st_doc, "x", f"{path}.start"), f"{path}.start.x")
        sy = _number(_need(st_doc, "y", f"{path}.start"), f"{path}.start.y")
        stheta = _number(st_doc.get("theta", 0.0), f"{path}.start.theta")
        sv = _number(st_doc.get("v", 0.0), f"{path}.start.v")
        somega = _number(st_doc.get("omega", 0.0), f"{path}.start.omega")
        if sv != 0.0 or somega != 0.0:
            raise ScenarioError(f"{path}.start", "robots must start at rest")
        goal = _rect(_need(rdoc, "goal", path), f"{path}.goal")
        if not bounds.contains_rect(goal):
            raise ScenarioError(f"{path}.goal", "goal extends outside the workspace")
        t0 = _number(rdoc.get("activation_time", 0.0), f"{path}.activation_time")
        if t0 < 0:
            raise ScenarioError(f"{path}.activation_time", "must be >= 0")
        if abs(t0 / planning_dt - round(t0 / planning_dt)) > 1e-9:
            raise ScenarioError(f"{path}.activation_time",
                                f"must be a multiple of planning_dt={planning_dt}")
        if not workspace.is_disc_free(sx, sy, radius):
            raise ScenarioError(f"{path}.start",
                                f"start ({sx}, {sy}) is not in free space")
        robots.append(RobotSpec(
            robot_id=rid, base_priority=prio, footprint_radius=radius,
            limits=limits, start=RobotState(sx, sy, stheta, 0.0, 0.0),
            goal=goal, activation_time=t0))

    for a in range(len(robots)):
        for b in range(a + 1, len(robots)):
            ra, rb = robots[a], robots[b]
            d = math.hypot(ra.start.x - rb.start.x, ra.start.y - rb.start.y)
            if d <= ra.footprint_radius + rb.footprint_radius:
                raise ScenarioError(
                    f"$.robots[{b}].start",
                    f"footprint overlaps robot {ra.robot_id} at start")

    from .planner import goal_cell_set
    for k, spec in enumerate(robots):
        if not goal_cell_set(workspace, workspace.grid, spec.goal,
                             spec.footprint_radius):
            raise ScenarioError(
                f"$.robots[{k}].goal",
                "goal region admits no footprint placement on the grid")

    return Scenario(workspace=workspace, dt=dt, planning_dt=planning_dt,
                    sensing_radius=sensing_radius, max_time=max_time,
                    seed=seed_raw, robots=tuple(robots))


def scenario_to_json(sc: Scenario) -> str:
    """Deterministic JSON rendering (round-trips through load_scenario)."""
    doc = {
        "workspace": {
            "bounds": list(sc.workspace.bounds.as_tuple()),
            "obstacles": [list(o.as_tuple()) for o in sc.workspace.obstacles],
            "cell_size": sc.workspace.cell_size,
        },
        "dt": sc.dt,
        "planning_dt": sc.planning_dt,
        "sensing_radius": sc.sensing_radius,
        "max_time": sc.max_time,
        "seed": sc.seed,
        "robots": [
            {
                "id": r.robot_id,
                "base_priority": r.base_priority,
                "footprint_radius": r.footprint_radius,
                "limits": {
                    "v_max": r.limits.v_max,
                    "omega_max": r.limits.omega_max,
                    "force_max": r.limits.force_max,
                    "torque_max": r.limits.torque_max,
                },
                "start": {"x": r.start.x, "y": r.start.y, "theta": r.start.theta},
                "goal": list(r.goal.as_tuple()),
                "activation_time": r.activation_time,
            }
            for r in sc.robots
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)
