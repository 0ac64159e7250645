"""Points, axis-aligned cells and the distance primitives.

All distances are computed as ``sqrt(dx*dx + dy*dy)`` in both the scalar and
the vectorised helpers so that the two paths agree bit for bit; rank bounds
compare these values with exact float ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, slots=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates: ({self.x}, {self.y})")


@dataclass(frozen=True, slots=True)
class Cell:
    """Closed axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin <= self.xmax and self.ymin <= self.ymax):
            raise ValueError(f"invalid cell bounds: {self}")

    @classmethod
    def from_corners(cls, lo: Point, hi: Point) -> "Cell":
        return cls(lo.x, lo.y, hi.x, hi.y)

    @property
    def min_corner(self) -> Point:
        return Point(self.xmin, self.ymin)

    @property
    def max_corner(self) -> Point:
        return Point(self.xmax, self.ymax)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def center(self) -> Point:
        return Point((self.xmin + self.xmax) / 2, (self.ymin + self.ymax) / 2)

    def contains(self, p: Point) -> bool:
        return self.xmin <= p.x <= self.xmax and self.ymin <= p.y <= self.ymax

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


def _norm(dx: float, dy: float) -> float:
    return math.sqrt(dx * dx + dy * dy)


def dist(p: Point, q: Point) -> float:
    return _norm(p.x - q.x, p.y - q.y)


def min_dist(p: Point, c: Cell) -> float:
    """Distance from ``p`` to the nearest point of ``c`` (0 inside or on the boundary)."""
    dx = max(c.xmin - p.x, 0.0, p.x - c.xmax)
    dy = max(c.ymin - p.y, 0.0, p.y - c.ymax)
    return _norm(dx, dy)


def max_dist(p: Point, c: Cell) -> float:
    """Distance from ``p`` to the farthest corner of ``c``."""
    dx = max(abs(p.x - c.xmin), abs(p.x - c.xmax))
    dy = max(abs(p.y - c.ymin), abs(p.y - c.ymax))
    return _norm(dx, dy)


def min_dist_rect(a: Cell, b: Cell) -> float:
    dx = max(a.xmin - b.xmax, b.xmin - a.xmax, 0.0)
    dy = max(a.ymin - b.ymax, b.ymin - a.ymax, 0.0)
    return _norm(dx, dy)


def max_dist_rect(a: Cell, b: Cell) -> float:
    dx = max(a.xmax - b.xmin, b.xmax - a.xmin)
    dy = max(a.ymax - b.ymin, b.ymax - a.ymin)
    return _norm(dx, dy)


# Vectorised forms over an (n, 2) coordinate array. ``cell`` is a 4-tuple
# (xmin, ymin, xmax, ymax) so hot loops can skip dataclass construction.

def min_dist_many(xy: np.ndarray, cell) -> np.ndarray:
    xmin, ymin, xmax, ymax = cell
    x = xy[:, 0]
    y = xy[:, 1]
    dx = np.maximum(np.maximum(xmin - x, x - xmax), 0.0)
    dy = np.maximum(np.maximum(ymin - y, y - ymax), 0.0)
    return np.sqrt(dx * dx + dy * dy)


def max_dist_many(xy: np.ndarray, cell) -> np.ndarray:
    xmin, ymin, xmax, ymax = cell
    x = xy[:, 0]
    y = xy[:, 1]
    dx = np.maximum(np.abs(x - xmin), np.abs(x - xmax))
    dy = np.maximum(np.abs(y - ymin), np.abs(y - ymax))
    return np.sqrt(dx * dx + dy * dy)


def dist_many(xy: np.ndarray, x: float, y: float) -> np.ndarray:
    dx = xy[:, 0] - x
    dy = xy[:, 1] - y
    return np.sqrt(dx * dx + dy * dy)


def bounding_cell(xy: np.ndarray) -> Cell:
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    return Cell(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


@dataclass(frozen=True)
class ObjectSet:
    """Static set of N points; object ids are the row indices ``0..N-1``."""

    xy: np.ndarray

    def __post_init__(self):
        xy = np.ascontiguousarray(self.xy, dtype=np.float64)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise ValueError(f"expected an (N, 2) array, got shape {xy.shape}")
        if len(xy) < 1:
            raise ValueError("an object set needs at least one object")
        if not np.isfinite(xy).all():
            raise ValueError("object coordinates must be finite")
        xy.setflags(write=False)
        object.__setattr__(self, "xy", xy)

    @classmethod
    def from_points(cls, points) -> "ObjectSet":
        return cls(np.array([(p.x, p.y) for p in points], dtype=np.float64))

    @property
    def n(self) -> int:
        return len(self.xy)

    def __len__(self) -> int:
        return len(self.xy)

    def point(self, oid: int) -> Point:
        x, y = self.xy[oid]
        return Point(float(x), float(y))

    def __eq__(self, other) -> bool:
        return isinstance(other, ObjectSet) and np.array_equal(self.xy, other.xy)

    __hash__ = None
