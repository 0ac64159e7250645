"""Rank bounds per cell and the epsilon-driven quadtree partition.

The tree follows the recursive partition procedure literally: a node is split
when some object handed to it violates ``upper - lower <= eps * lower`` and
only the violating subset is passed on to the four children.  Expansion is
lazy: a child keeps its pending (violators, candidates) pair until it is first
visited, so only the regions that queries actually reach are refined.  The
resulting tree is identical to the eager one; ``expand_all`` forces it.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import Cell, ObjectSet, Point, max_dist_many, min_dist_many

NW, NE, SW, SE = range(4)

# Below this many pairwise comparisons counting is done by broadcasting,
# above it by sorting the candidate distances.
_BROADCAST_LIMIT = 1 << 14


class OutOfBounds(ValueError):
    """Raised when a point lies outside the root cell of the quadtree."""


@dataclass(frozen=True)
class PartitionConfig:
    epsilon: float = 3.0
    max_depth: int = 16
    block_size: int = 128

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")


@dataclass(frozen=True, slots=True)
class RankBounds:
    lower: int
    upper: int


def rank_bounds(objects: ObjectSet, cell) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower/upper rank bounds of every object for queries inside ``cell``.

    Returns ``(lower, upper, tied)`` where ``tied`` marks objects whose upper
    bound had to be clamped up to the lower bound (only possible for
    point-like cells with coincident objects).
    """
    cell = _as_tuple(cell)
    mind = min_dist_many(objects.xy, cell)
    maxd = max_dist_many(objects.xy, cell)
    return _bounds_against(mind, maxd, mind, maxd)


def _bounds_against(mind_o, maxd_o, mind_c, maxd_c, presorted=None):
    # Counts over the candidate pool (which contains every object in mind_o);
    # the self term is removed with the same comparison that would count it.
    if len(mind_o) * len(mind_c) <= _BROADCAST_LIMIT:
        n_lower = (maxd_c[None, :] <= mind_o[:, None]).sum(axis=1)
        n_upper = (mind_c[None, :] < maxd_o[:, None]).sum(axis=1)
    else:
        smax, smin = presorted if presorted is not None else (np.sort(maxd_c), np.sort(mind_c))
        n_lower = np.searchsorted(smax, mind_o, side="right")
        n_upper = np.searchsorted(smin, maxd_o, side="left")
    n_lower = n_lower - (maxd_o <= mind_o)
    n_upper = n_upper - (mind_o < maxd_o)
    lower = n_lower.astype(np.int64) + 1
    upper = n_upper.astype(np.int64) + 1
    tied = upper < lower
    upper = np.maximum(upper, lower)
    return lower, upper, tied


def lower_rank_bound(o: int, c: Cell, objects: ObjectSet) -> int:
    lower, _, _ = rank_bounds(objects, c)
    return int(lower[o])


def upper_rank_bound(o: int, c: Cell, objects: ObjectSet) -> int:
    _, upper, _ = rank_bounds(objects, c)
    return int(upper[o])


def needs_split(bounds: RankBounds, epsilon: float) -> bool:
    return bounds.upper - bounds.lower > epsilon * bounds.lower


def _as_tuple(cell):
    return cell.as_tuple() if isinstance(cell, Cell) else tuple(cell)


def root_cell(objects: ObjectSet) -> Cell:
    """Bounding box of the objects grown by 1% per side.

    A zero extent along one axis borrows the other axis' extent, and a single
    location gets a unit box, so the root always has positive area.
    """
    lo = objects.xy.min(axis=0)
    hi = objects.xy.max(axis=0)
    w, h = float(hi[0] - lo[0]), float(hi[1] - lo[1])
    if w == 0 and h == 0:
        w = h = 1.0
    elif w == 0:
        w = h
    elif h == 0:
        h = w
    px, py = 0.01 * w, 0.01 * h
    if hi[0] == lo[0]:
        px = w / 2
    if hi[1] == lo[1]:
        py = h / 2
    return Cell(float(lo[0] - px), float(lo[1] - py), float(hi[0] + px), float(hi[1] + py))


class QuadtreeNode:
    """A quadtree cell. ``key`` is ``(depth, ix, iy)``, unique within a tree."""

    __slots__ = ("cell", "depth", "ix", "iy", "children", "capped", "_pending")

    def __init__(self, cell: tuple, depth: int, ix: int, iy: int, pending=None):
        self.cell = cell
        self.depth = depth
        self.ix = ix
        self.iy = iy
        self.children: list[QuadtreeNode] | None = None
        self.capped = False
        self._pending = pending

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.depth, self.ix, self.iy)

    @property
    def expanded(self) -> bool:
        return self._pending is None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def as_cell(self) -> Cell:
        return Cell(*self.cell)

    def __repr__(self):
        state = "leaf" if self.is_leaf else "inner"
        if not self.expanded:
            state = "pending"
        return f"QuadtreeNode(depth={self.depth}, cell={self.cell}, {state})"


class Quadtree:
    """Epsilon-bounded partition of the dataspace over a static object set."""

    def __init__(self, objects: ObjectSet, config: PartitionConfig, root: Cell | None = None):
        self.objects = objects
        self.config = config
        root = root if root is not None else root_cell(objects)
        if not (root.width > 0 and root.height > 0):
            raise ValueError(f"degenerate dataspace (zero area): {root}")
        allidx = np.arange(objects.n)
        self.root = QuadtreeNode(root.as_tuple(), 0, 0, 0, pending=(allidx, allidx))
        self.nodes_expanded = 0
        self.build_ns = 0  # time spent expanding nodes

    # -- expansion -----------------------------------------------------

    def _expand(self, node: QuadtreeNode) -> None:
        t0 = time.perf_counter_ns()
        try:
            self._split(node)
        finally:
            self.build_ns += time.perf_counter_ns() - t0

    def _split(self, node: QuadtreeNode) -> None:
        incoming, cands = node._pending
        node._pending = None
        self.nodes_expanded += 1
        xy = self.objects.xy
        cell = node.cell
        mind_o = min_dist_many(xy[incoming], cell)
        maxd_o = max_dist_many(xy[incoming], cell)
        reach = maxd_o.max()
        mind_c = min_dist_many(xy[cands], cell)
        keep = mind_c <= reach
        if not keep.all():
            cands = cands[keep]
            mind_c = mind_c[keep]
        maxd_c = max_dist_many(xy[cands], cell)
        lower, upper, _ = _bounds_against(mind_o, maxd_o, mind_c, maxd_c)
        violators = incoming[(upper - lower) > self.config.epsilon * lower]
        if len(violators) == 0:
            return
        if node.depth >= self.config.max_depth:
            node.capped = True
            return
        xmin, ymin, xmax, ymax = cell
        xm = (xmin + xmax) / 2
        ym = (ymin + ymax) / 2
        d = node.depth + 1
        ix, iy = 2 * node.ix, 2 * node.iy
        pending = (violators, cands)
        node.children = [
            QuadtreeNode((xmin, ym, xm, ymax), d, ix, iy + 1, pending),      # NW
            QuadtreeNode((xm, ym, xmax, ymax), d, ix + 1, iy + 1, pending),  # NE
            QuadtreeNode((xmin, ymin, xm, ym), d, ix, iy, pending),          # SW
            QuadtreeNode((xm, ymin, xmax, ym), d, ix + 1, iy, pending),      # SE
        ]

    def locate(self, x: float, y: float) -> QuadtreeNode:
        """Leaf containing ``(x, y)``; boundary points go to the higher quadrant."""
        node = self.root
        xmin, ymin, xmax, ymax = node.cell
        if not (xmin <= x <= xmax and ymin <= y <= ymax):
            raise OutOfBounds(f"point ({x}, {y}) outside dataspace {node.cell}")
        while True:
            if node._pending is not None:
                self._expand(node)
            children = node.children
            if children is None:
                return node
            xmin, ymin, xmax, ymax = node.cell
            right = x >= (xmin + xmax) / 2
            top = y >= (ymin + ymax) / 2
            node = children[(NE if right else NW) if top else (SE if right else SW)]

    def expand_all(self) -> "Quadtree":
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node._pending is not None:
                self._expand(node)
            if node.children is not None:
                stack.extend(node.children)
        return self

    def node_at(self, key: tuple[int, int, int]) -> QuadtreeNode:
        """Walk down to the node with the given ``(depth, ix, iy)`` key."""
        depth, ix, iy = key
        node = self.root
        for level in range(depth - 1, -1, -1):
            if node._pending is not None:
                self._expand(node)
            if node.children is None:
                raise KeyError(key)
            right = (ix >> level) & 1
            top = (iy >> level) & 1
            node = node.children[(NE if right else NW) if top else (SE if right else SW)]
        if node._pending is not None:
            self._expand(node)
        return node

    def leaves(self, expand: bool = True):
        """Leaves in depth-first order; forces full expansion unless told not to."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node._pending is not None:
                if not expand:
                    continue
                self._expand(node)
            if node.children is None:
                yield node
            else:
                stack.extend(reversed(node.children))

    def iter_nodes(self):
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            yield node
            if node.children is not None:
                queue.extend(node.children)

    def check_leaf(self, leaf: QuadtreeNode) -> int:
        """Number of objects (out of all N) violating the epsilon condition at ``leaf``."""
        lower, upper, _ = rank_bounds(self.objects, leaf.cell)
        return int(((upper - lower) > self.config.epsilon * lower).sum())


def build_quadtree(objects: ObjectSet, config: PartitionConfig, lazy: bool = False,
                   root: Cell | None = None) -> Quadtree:
    tree = Quadtree(objects, config, root)
    if not lazy:
        tree.expand_all()
    return tree


def locate_leaf(tree: Quadtree, p: Point) -> Cell:
    return tree.locate(p.x, p.y).as_cell()
