"""Range queries and the count-based sliding window."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .geometry import Point


@dataclass(frozen=True, slots=True)
class RangeQuery:
    location: Point
    radius: float
    sequence_no: int

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"radius must be finite and positive, got {self.radius}")

    @classmethod
    def at(cls, x: float, y: float, radius: float, seq: int) -> "RangeQuery":
        return cls(Point(float(x), float(y)), float(radius), int(seq))


class SlidingWindow:
    """The ``capacity`` most recent items, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items = deque()

    def push(self, item):
        """Append ``item``; return the evicted oldest item, or None while filling."""
        evicted = self._items.popleft() if len(self._items) == self.capacity else None
        self._items.append(item)
        return evicted

    @property
    def full(self) -> bool:
        return len(self._items) == self.capacity

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    @property
    def queries(self) -> list:
        return list(self._items)
