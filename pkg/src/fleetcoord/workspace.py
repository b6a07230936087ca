"""Shared workspace model: bounds, rectangular obstacles, and the uniform grid decomposition.

All set semantics are closed: rectangles and footprint discs include their
boundaries, so "touching" counts as intersecting. This is deliberately
conservative for every safety check built on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

CellIndex = tuple[int, int]
CellSet = set[CellIndex]


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle [x0, x1] x [y0, y1], in meters."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (self.x1 >= self.x0 and self.y1 >= self.y0):
            raise ValueError(f"degenerate rectangle: {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains_point(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def contains_rect(self, other: "Rect") -> bool:
        return (self.x0 <= other.x0 and other.x1 <= self.x1
                and self.y0 <= other.y0 and other.y1 <= self.y1)

    def intersects_rect(self, other: "Rect") -> bool:
        return not (other.x1 < self.x0 or self.x1 < other.x0
                    or other.y1 < self.y0 or self.y1 < other.y0)

    def distance_to_point(self, x: float, y: float) -> float:
        """Euclidean distance from (x, y) to the closed rectangle (0 inside)."""
        dx = max(self.x0 - x, 0.0, x - self.x1)
        dy = max(self.y0 - y, 0.0, y - self.y1)
        return math.hypot(dx, dy)

    def contains_disc(self, cx: float, cy: float, r: float) -> bool:
        return (self.x0 <= cx - r and cx + r <= self.x1
                and self.y0 <= cy - r and cy + r <= self.y1)

    def intersects_disc(self, cx: float, cy: float, r: float) -> bool:
        return self.distance_to_point(cx, cy) <= r

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class Footprint:
    """Closed disc of workspace points occupied by a robot at a position."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if self.radius < 0.0:
            raise ValueError(f"footprint radius must be >= 0, got {self.radius}")


@dataclass(frozen=True)
class Cell:
    """One grid cell: its integer index pair and its (possibly clipped) box."""

    index: CellIndex
    box: Rect


class CellGrid:
    """Uniform decomposition of a bounding rectangle into cell_size squares.

    Cells on the right/top edge are clipped to the bounds, so the union of
    all cell boxes equals the bounds exactly. Indices are (column, row),
    column-major, both starting at 0 in the lower-left corner.
    """

    def __init__(self, bounds: Rect, cell_size: float) -> None:
        if cell_size <= 0.0:
            raise ValueError(f"cell_size must be positive, got {cell_size}")
        if bounds.width <= 0.0 or bounds.height <= 0.0:
            raise ValueError(f"grid bounds must be non-degenerate: {bounds}")
        self.bounds = bounds
        self.cell_size = cell_size
        self.nx = int(math.ceil(bounds.width / cell_size - 1e-9))
        self.ny = int(math.ceil(bounds.height / cell_size - 1e-9))

    def __len__(self) -> int:
        return self.nx * self.ny

    def is_valid_index(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.nx and 0 <= iy < self.ny

    def cell_box(self, ix: int, iy: int) -> Rect:
        if not self.is_valid_index(ix, iy):
            raise IndexError(f"cell index ({ix}, {iy}) outside grid {self.nx}x{self.ny}")
        b = self.bounds
        cs = self.cell_size
        return Rect(
            b.x0 + ix * cs,
            b.y0 + iy * cs,
            min(b.x0 + (ix + 1) * cs, b.x1),
            min(b.y0 + (iy + 1) * cs, b.y1),
        )

    def cell(self, ix: int, iy: int) -> Cell:
        return Cell((ix, iy), self.cell_box(ix, iy))

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return self.cell_box(ix, iy).center

    def index_containing(self, x: float, y: float) -> CellIndex:
        """Primary cell containing the point (boundary points resolve low)."""
        b = self.bounds
        ix = int(math.floor((x - b.x0) / self.cell_size))
        iy = int(math.floor((y - b.y0) / self.cell_size))
        return (min(max(ix, 0), self.nx - 1), min(max(iy, 0), self.ny - 1))

    def cells_for_disc(self, cx: float, cy: float, r: float) -> CellSet:
        """All cells whose closed box touches the closed disc."""
        b = self.bounds
        cs = self.cell_size
        ix_lo = max(0, int(math.floor((cx - r - b.x0) / cs)) - 1)
        ix_hi = min(self.nx - 1, int(math.floor((cx + r - b.x0) / cs)) + 1)
        iy_lo = max(0, int(math.floor((cy - r - b.y0) / cs)) - 1)
        iy_hi = min(self.ny - 1, int(math.floor((cy + r - b.y0) / cs)) + 1)
        out: CellSet = set()
        for ix in range(ix_lo, ix_hi + 1):
            for iy in range(iy_lo, iy_hi + 1):
                if self.cell_box(ix, iy).distance_to_point(cx, cy) <= r:
                    out.add((ix, iy))
        return out

    def cells_for_rect(self, rect: Rect) -> CellSet:
        b = self.bounds
        cs = self.cell_size
        ix_lo = max(0, int(math.floor((rect.x0 - b.x0) / cs)) - 1)
        ix_hi = min(self.nx - 1, int(math.floor((rect.x1 - b.x0) / cs)) + 1)
        iy_lo = max(0, int(math.floor((rect.y0 - b.y0) / cs)) - 1)
        iy_hi = min(self.ny - 1, int(math.floor((rect.y1 - b.y0) / cs)) + 1)
        out: CellSet = set()
        for ix in range(ix_lo, ix_hi + 1):
            for iy in range(iy_lo, iy_hi + 1):
                if self.cell_box(ix, iy).intersects_rect(rect):
                    out.add((ix, iy))
        return out


@dataclass(frozen=True)
class Workspace:
    """Bounded planar workspace populated with closed rectangular obstacles."""

    bounds: Rect
    obstacles: tuple[Rect, ...]
    cell_size: float
    _grid: CellGrid = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.cell_size <= 0.0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        for k, obs in enumerate(self.obstacles):
            if not self.bounds.contains_rect(obs):
                raise ValueError(f"obstacle {k} extends outside the bounds: {obs}")
        area = sum(o.width * o.height for o in self.obstacles)
        if area >= self.bounds.width * self.bounds.height:
            raise ValueError("obstacles cover the entire workspace; free space is empty")
        object.__setattr__(self, "_grid", CellGrid(self.bounds, self.cell_size))

    @property
    def grid(self) -> CellGrid:
        return self._grid

    def is_disc_free(self, cx: float, cy: float, r: float) -> bool:
        """Closed disc inside the bounds and strictly clear of all obstacles.

        Obstacles are closed sets, so tangency (distance exactly r) counts
        as contact and the disc is not free.
        """
        if not self.bounds.contains_disc(cx, cy, r):
            return False
        for obs in self.obstacles:
            if obs.distance_to_point(cx, cy) <= r:
                return False
        return True

    def disc_obstacle_clearance(self, cx: float, cy: float, r: float) -> float:
        """Smallest obstacle/boundary clearance of the disc; negative when overlapping."""
        margin = min(
            cx - r - self.bounds.x0,
            self.bounds.x1 - (cx + r),
            cy - r - self.bounds.y0,
            self.bounds.y1 - (cy + r),
        )
        for obs in self.obstacles:
            margin = min(margin, obs.distance_to_point(cx, cy) - r)
        return margin


def decompose(bounds: Rect, cell_size: float) -> CellGrid:
    """Partition the bounds into a uniform grid of cells.

    The count per axis is ceil(extent / cell_size); the last column/row is
    clipped so the union of cells covers the bounds exactly.
    """
    return CellGrid(bounds, cell_size)


def cells_intersecting(grid: CellGrid, region: Footprint | Rect) -> CellSet:
    """Set of grid cells whose closed box intersects the closed region.

    A region entirely outside the bounds yields an empty set.
    """
    if isinstance(region, Footprint):
        cx, cy = region.center
        return grid.cells_for_disc(cx, cy, region.radius)
    if isinstance(region, Rect):
        return grid.cells_for_rect(region)
    raise TypeError(f"unsupported region type: {type(region).__name__}")


def is_region_free(workspace: Workspace, region: Footprint | Rect) -> bool:
    """True iff the region lies inside the bounds and misses every obstacle."""
    if isinstance(region, Footprint):
        cx, cy = region.center
        return workspace.is_disc_free(cx, cy, region.radius)
    if isinstance(region, Rect):
        if not workspace.bounds.contains_rect(region):
            return False
        return not any(obs.intersects_rect(region) for obs in workspace.obstacles)
    raise TypeError(f"unsupported region type: {type(region).__name__}")
