"""Cell occupancy intervals and pairwise conflict detection.

For each grid cell a robot's footprint touches, we record the union of
closed time intervals during which it does so. Two robots have a
spatial-temporal conflict when some shared cell carries overlapping
intervals; that is the trigger for replanning. A spatial conflict ignores
timing and only asks whether the traversed cell sets intersect.

Sampled trajectories can skip brief cell contacts, so the computation is
conservative in both axes: intervals are dilated by one sample period on
each side, and the footprint is inflated by half the inter-sample travel
distance (which covers the swept capsule between samples). The detector may
therefore over-report, never under-report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import PositionTrajectory
from .intervals import IntervalSet
from .workspace import CellGrid, CellIndex, CellSet

OccupancyMap = dict[CellIndex, IntervalSet]


def _step_inflation(pts: np.ndarray) -> np.ndarray:
    """Per-sample footprint inflation: half the larger adjacent travel step."""
    n = len(pts)
    if n < 2:
        return np.zeros(n)
    steps = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    infl = np.zeros(n)
    infl[:-1] = steps
    infl[1:] = np.maximum(infl[1:], steps)
    return 0.5 * infl


def build_occupancy(grid: CellGrid, times: np.ndarray, pts: np.ndarray,
                    footprint_radius: float, dt: float,
                    clip_lo: float, clip_hi: float) -> OccupancyMap:
    """Occupancy map over explicit samples, dilated one dt per side then clipped."""
    out: OccupancyMap = {}
    infl = _step_inflation(pts)
    for k in range(len(times)):
        t = float(times[k])
        lo = max(t - dt, clip_lo)
        hi = min(t + dt, clip_hi)
        if hi < lo:
            continue
        for cell in grid.cells_for_disc(pts[k, 0], pts[k, 1],
                                        footprint_radius + infl[k]):
            iv = out.get(cell)
            if iv is None:
                iv = out[cell] = IntervalSet()
            iv.add(lo, hi)
    return out


def occupancy_map(ptraj: PositionTrajectory, t_c: float, t_fl: float,
                  footprint_radius: float, grid: CellGrid) -> OccupancyMap:
    """Occupancy intervals per cell over the window [t_c, t_fl].

    The map's key set is the traversed cell set over the window. The
    trajectory must cover the whole window; extend a finished trajectory
    with its held final position first if needed.
    """
    if t_fl < t_c:
        raise ValueError(f"window end {t_fl} precedes start {t_c}")
    if len(ptraj) == 0 or ptraj.t0 > t_c + 1e-9 or ptraj.end_time < t_fl - 1e-9:
        raise ValueError(
            f"trajectory does not cover the window [{t_c}, {t_fl}]")
    sel = (ptraj.times >= t_c - 1e-9) & (ptraj.times <= t_fl + 1e-9)
    return build_occupancy(grid, ptraj.times[sel], ptraj.points[sel],
                           footprint_radius, ptraj.dt, t_c, t_fl)


def conflict_region(map_i: OccupancyMap, map_j: OccupancyMap) -> CellSet:
    """Cells traversed by both robots (intersection of the key sets)."""
    return set(map_i.keys()) & set(map_j.keys())


def spatial_conflict(cells_i: CellSet, cells_j: CellSet) -> bool:
    """Timing-free overlap test between two traversed cell sets."""
    return not cells_i.isdisjoint(cells_j)


@dataclass
class ConflictReport:
    """Outcome of conflict detection against the current neighbor set.

    ``cells`` maps each conflicting neighbor to the shared cells whose
    occupancy intervals overlap, with the overlap itself.
    """

    robot_id: int
    cells: dict[int, dict[CellIndex, IntervalSet]] = field(default_factory=dict)

    @property
    def conflict_neighbors(self) -> set[int]:
        return set(self.cells.keys())

    def __bool__(self) -> bool:
        return bool(self.cells)


def detect_conflicts(robot_id: int, my_map: OccupancyMap,
                     neighbor_maps: dict[int, OccupancyMap]) -> ConflictReport:
    """Run the per-robot conflict detection over all sensed neighbors.

    A neighbor conflicts iff some shared cell has occupancy intervals that
    intersect in time. All maps must be computed at the same current time,
    each over its own look-ahead window.
    """
    report = ConflictReport(robot_id)
    for j in sorted(neighbor_maps):
        their = neighbor_maps[j]
        hits: dict[CellIndex, IntervalSet] = {}
        for cell in sorted(set(my_map.keys()) & set(their.keys())):
            overlap = my_map[cell].intersection(their[cell])
            if overlap:
                hits[cell] = overlap
        if hits:
            report.cells[j] = hits
    return report
