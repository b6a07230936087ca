"""Unions of closed time intervals, kept sorted and disjoint.

Closed-set semantics throughout: [1, 2] and [2, 3] touch, so they merge into
[1, 3], and [0, 1] intersects [1, 2] at the shared endpoint.
"""

from __future__ import annotations

import bisect
import math
from collections.abc import Iterable, Iterator


class IntervalSet:
    """Sorted list of disjoint closed intervals with merge-on-insert."""

    __slots__ = ("_iv",)

    def __init__(self, intervals: Iterable[tuple[float, float]] = ()) -> None:
        self._iv: list[tuple[float, float]] = []
        for lo, hi in intervals:
            self.add(lo, hi)

    def add(self, lo: float, hi: float) -> None:
        if hi < lo:
            raise ValueError(f"interval end {hi} precedes start {lo}")
        iv = self._iv
        i = bisect.bisect_left(iv, (lo, -math.inf))
        # absorb any neighbor that touches [lo, hi]
        while i > 0 and iv[i - 1][1] >= lo:
            lo = min(lo, iv[i - 1][0])
            hi = max(hi, iv[i - 1][1])
            del iv[i - 1]
            i -= 1
        while i < len(iv) and iv[i][0] <= hi:
            hi = max(hi, iv[i][1])
            del iv[i]
        iv.insert(i, (lo, hi))

    def __iter__(self) -> Iterator[tuple[float, float]]:
        return iter(self._iv)

    def __len__(self) -> int:
        return len(self._iv)

    def __bool__(self) -> bool:
        return bool(self._iv)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._iv == other._iv

    def __repr__(self) -> str:
        return f"IntervalSet({self._iv})"

    @property
    def intervals(self) -> list[tuple[float, float]]:
        return list(self._iv)

    def start(self) -> float:
        """Left endpoint of the earliest interval (+inf when empty)."""
        return self._iv[0][0] if self._iv else math.inf

    def covers(self, t: float) -> bool:
        i = bisect.bisect_right(self._iv, (t, math.inf))
        return i > 0 and self._iv[i - 1][1] >= t

    def overlaps(self, other: "IntervalSet") -> bool:
        a, b = self._iv, other._iv
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo <= hi:
                return True
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return False

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        out = IntervalSet()
        a, b = self._iv, other._iv
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo <= hi:
                out.add(lo, hi)
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return out

    def clipped(self, lo: float, hi: float) -> "IntervalSet":
        """Intersection with the single closed window [lo, hi]."""
        out = IntervalSet()
        for a, b in self._iv:
            if b < lo:
                continue
            if a > hi:
                break
            out.add(max(a, lo), min(b, hi))
        return out

    def total_length(self) -> float:
        return sum(b - a for a, b in self._iv)


def overlap_within(a: IntervalSet, a_lo: float, a_hi: float,
                   b: IntervalSet, b_lo: float, b_hi: float) -> tuple[float, float] | None:
    """First overlap between a clipped to [a_lo, a_hi] and b clipped to [b_lo, b_hi].

    Allocation-free variant of ``a.clipped(...).intersection(b.clipped(...))``
    for the hot detection path; returns None when the clipped sets are disjoint.
    """
    ai = a._iv
    bi = b._iv
    i = j = 0
    while i < len(ai) and j < len(bi):
        a0 = max(ai[i][0], a_lo)
        a1 = min(ai[i][1], a_hi)
        b0 = max(bi[j][0], b_lo)
        b1 = min(bi[j][1], b_hi)
        if a0 <= a1 and b0 <= b1:
            lo = max(a0, b0)
            hi = min(a1, b1)
            if lo <= hi:
                return (lo, hi)
        if ai[i][1] < bi[j][1]:
            i += 1
        else:
            j += 1
    return None
