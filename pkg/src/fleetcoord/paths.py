"""Polyline paths parameterized by arc length.

Paths are the fixed geometric component of a plan: straight segments joined
at corners. Consecutive collinear segments are merged on construction, so
every interior vertex that survives is a genuine corner where the robot
must stop and turn in place.
"""

from __future__ import annotations

import math

import numpy as np

from .workspace import Rect

_MIN_SEGMENT = 1e-9
_MIN_TURN = 1e-7


class Path:
    """Arc-length parameterized polyline in the plane."""

    __slots__ = ("waypoints", "cum_s", "headings", "length")

    def __init__(self, waypoints) -> None:
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
            raise ValueError("waypoints must be a non-empty (W, 2) array")
        cleaned = [pts[0]]
        for p in pts[1:]:
            if math.hypot(p[0] - cleaned[-1][0], p[1] - cleaned[-1][1]) > _MIN_SEGMENT:
                cleaned.append(p)
        # merge collinear joints so interior vertices are true corners
        merged = [cleaned[0]]
        for p in cleaned[1:]:
            if len(merged) >= 2:
                a, b = merged[-2], merged[-1]
                h1 = math.atan2(b[1] - a[1], b[0] - a[0])
                h2 = math.atan2(p[1] - b[1], p[0] - b[0])
                if abs(_wrap(h2 - h1)) < _MIN_TURN:
                    merged[-1] = p
                    continue
            merged.append(p)
        arr = np.array(merged, dtype=float)
        self.waypoints = arr
        if len(arr) == 1:
            self.cum_s = np.zeros(1)
            self.headings = np.zeros(0)
            self.length = 0.0
        else:
            seg = np.diff(arr, axis=0)
            seg_len = np.hypot(seg[:, 0], seg[:, 1])
            self.cum_s = np.concatenate([[0.0], np.cumsum(seg_len)])
            self.headings = np.arctan2(seg[:, 1], seg[:, 0])
            self.length = float(self.cum_s[-1])

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def start(self) -> tuple[float, float]:
        return (float(self.waypoints[0, 0]), float(self.waypoints[0, 1]))

    @property
    def end(self) -> tuple[float, float]:
        return (float(self.waypoints[-1, 0]), float(self.waypoints[-1, 1]))

    def segment_of(self, s: float) -> int:
        """Index of the segment containing arc position s (vertices go forward)."""
        if len(self.waypoints) == 1:
            raise ValueError("degenerate path has no segments")
        k = int(np.searchsorted(self.cum_s, s, side="right")) - 1
        return min(max(k, 0), len(self.headings) - 1)

    def point_at(self, s: float) -> tuple[float, float]:
        s = min(max(s, 0.0), self.length)
        if len(self.waypoints) == 1:
            return self.start
        k = self.segment_of(s)
        seg_len = self.cum_s[k + 1] - self.cum_s[k]
        frac = (s - self.cum_s[k]) / seg_len
        p = self.waypoints[k] + frac * (self.waypoints[k + 1] - self.waypoints[k])
        return (float(p[0]), float(p[1]))

    def points_at(self, s: np.ndarray) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        if len(self.waypoints) == 1:
            return np.repeat(self.waypoints[:1], len(s), axis=0)
        x = np.interp(s, self.cum_s, self.waypoints[:, 0])
        y = np.interp(s, self.cum_s, self.waypoints[:, 1])
        return np.stack([x, y], axis=-1)

    def heading_at(self, s: float) -> float:
        if len(self.headings) == 0:
            return 0.0
        return float(self.headings[self.segment_of(s)])

    def corners(self) -> list[tuple[float, float]]:
        """Interior vertices as (arc position, signed turn angle)."""
        out = []
        for k in range(1, len(self.headings)):
            turn = _wrap(self.headings[k] - self.headings[k - 1])
            if abs(turn) >= _MIN_TURN:
                out.append((float(self.cum_s[k]), float(turn)))
        return out

    def remaining_from(self, s0: float) -> "Path":
        """Sub-path from arc position s0 to the end."""
        s0 = min(max(s0, 0.0), self.length)
        if len(self.waypoints) == 1 or s0 >= self.length - _MIN_SEGMENT:
            return Path([self.point_at(self.length)])
        k = self.segment_of(s0)
        head = np.asarray(self.point_at(s0), dtype=float).reshape(1, 2)
        rest = self.waypoints[k + 1:]
        return Path(np.concatenate([head, rest], axis=0))

    def disc_contact_ranges(self, box: Rect, radius: float,
                            step: float) -> list[tuple[float, float]]:
        """Arc-length intervals where a disc of the given radius touches the box.

        Sampled at the given arc step and dilated by one step on each side,
        which over-approximates the true contact set.
        """
        if self.length <= 0.0:
            x, y = self.start
            if box.distance_to_point(x, y) <= radius:
                return [(0.0, 0.0)]
            return []
        n = max(2, int(math.ceil(self.length / step)) + 1)
        s = np.linspace(0.0, self.length, n)
        pts = self.points_at(s)
        dx = np.maximum.reduce([box.x0 - pts[:, 0], np.zeros(n), pts[:, 0] - box.x1])
        dy = np.maximum.reduce([box.y0 - pts[:, 1], np.zeros(n), pts[:, 1] - box.y1])
        hit = np.hypot(dx, dy) <= radius
        ranges: list[tuple[float, float]] = []
        k = 0
        actual = self.length / (n - 1)
        while k < n:
            if hit[k]:
                j = k
                while j + 1 < n and hit[j + 1]:
                    j += 1
                ranges.append((max(0.0, s[k] - actual), min(self.length, s[j] + actual)))
                k = j + 1
            else:
                k += 1
        return ranges


def _wrap(angle: float) -> float:
    wrapped = (angle + math.pi) % (2.0 * math.pi) - math.pi
    if wrapped == -math.pi:
        return math.pi
    return wrapped


def snap_runs(waypoints, quantum: float) -> np.ndarray:
    """Adjust vertices so every segment length is an exact multiple of quantum.

    The speed lattice advances arc length in fixed quanta, so segment (run)
    lengths must land on that lattice exactly. Each vertex after the first
    is slid along its incoming direction to the nearest multiple; vertices
    move at most quantum/2 and targets closer than quantum/2 are dropped.
    The start point is never moved.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise ValueError("waypoints must be a non-empty (W, 2) array")
    out = [pts[0].copy()]
    for target in pts[1:]:
        cur = out[-1]
        d = target - cur
        dist = math.hypot(d[0], d[1])
        n_quanta = int(round(dist / quantum))
        if n_quanta == 0:
            continue
        out.append(cur + d * (n_quanta * quantum / dist))
    return np.array(out)
