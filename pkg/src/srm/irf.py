"""Inverted Rank File: one rank list per quadtree leaf.

A rank list holds every object of the set, sorted ascending by its lower rank
bound for the leaf (ties by minimum distance to the leaf, then by id), cut into
blocks of ``B`` entries.  Each block carries the MBR of its members and the
minimum distance of its first entry, which is the smallest in the block
because the whole list is non-decreasing in minimum distance.

Lists are pure functions of (objects, leaf cell), so the index materialises
them on first use and keeps at most ``max_cached_entries`` entries in memory,
dropping the least recently used list when over budget.
"""

from __future__ import annotations

import io
import struct
import zlib
import time
from bisect import bisect_left, bisect_right
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Cell, ObjectSet, Point, max_dist_many, max_dist_rect, min_dist, min_dist_many
from .partition import PartitionConfig, Quadtree, QuadtreeNode, _bounds_against, build_quadtree

MAGIC = b"IRF1"
VERSION = 1
DEFAULT_CACHE_ENTRIES = 30_000_000


class IndexFormatError(ValueError):
    """The index file is truncated, corrupted or of an unknown version."""


@dataclass(frozen=True, slots=True)
class RankEntry:
    object_id: int
    lower_rank: int
    min_distance: float


@dataclass(frozen=True)
class RankBlock:
    entries: tuple[RankEntry, ...]
    mbr: Cell
    block_min_dist: float
    block_max_dist: float


class RankList:
    """Rank list of one leaf cell, stored column-wise."""

    def __init__(self, cell: tuple, ids: np.ndarray, lower: np.ndarray, mind: np.ndarray,
                 block_size: int, xy: np.ndarray, maxd: np.ndarray | None = None):
        self.cell = tuple(cell)
        self.ids = ids
        self.lower = lower
        self.mind = mind
        self.block_size = block_size
        n = len(ids)
        self.n = n
        self.starts = np.arange(0, n, block_size)
        self.block_min = mind[self.starts]
        self._block_min_list = self.block_min.tolist()
        px = xy[ids, 0]
        py = xy[ids, 1]
        self.mbr = np.column_stack([
            np.minimum.reduceat(px, self.starts), np.minimum.reduceat(py, self.starts),
            np.maximum.reduceat(px, self.starts), np.maximum.reduceat(py, self.starts),
        ])
        if maxd is None:
            maxd = max_dist_many(xy[ids], self.cell)
        self.block_max = np.maximum.reduceat(maxd, self.starts)
        rank_of = np.empty(n, dtype=np.int32)
        rank_of[ids] = lower
        self._rank_of = rank_of

    @classmethod
    def build(cls, objects: ObjectSet, cell, block_size: int) -> "RankList":
        cell = cell.as_tuple() if isinstance(cell, Cell) else tuple(cell)
        xy = objects.xy
        mind = min_dist_many(xy, cell)
        maxd = max_dist_many(xy, cell)
        smax = np.sort(maxd)
        lower, _, _ = _bounds_against(mind, maxd, mind, maxd, presorted=(smax, smax))
        ids = np.arange(objects.n)
        order = np.lexsort((ids, mind, lower))
        return cls(cell, order.astype(np.int32), lower[order].astype(np.int32), mind[order],
                   block_size, xy, maxd[order])

    @property
    def n_blocks(self) -> int:
        return len(self.starts)

    @property
    def rank_of(self) -> np.ndarray:
        """Dense ``object id -> lower rank`` lookup."""
        return self._rank_of

    def block_bounds(self, j: int) -> tuple[int, int]:
        s = j * self.block_size
        return s, min(s + self.block_size, self.n)

    def block(self, j: int) -> RankBlock:
        s, e = self.block_bounds(j)
        entries = tuple(RankEntry(int(i), int(r), float(d))
                        for i, r, d in zip(self.ids[s:e], self.lower[s:e], self.mind[s:e]))
        return RankBlock(entries, Cell(*map(float, self.mbr[j])), float(self.block_min[j]),
                         float(self.block_max[j]))

    @property
    def blocks(self) -> list[RankBlock]:
        return [self.block(j) for j in range(self.n_blocks)]

    def entries(self) -> list[RankEntry]:
        return [e for b in self.blocks for e in b.entries]

    def __eq__(self, other) -> bool:
        return (isinstance(other, RankList) and self.cell == other.cell
                and self.block_size == other.block_size
                and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.mind, other.mind))

    __hash__ = None

    def __repr__(self):
        return f"RankList(cell={self.cell}, n={self.n}, blocks={self.n_blocks})"


@dataclass(frozen=True, slots=True)
class Located:
    block: int
    offset: int
    entry: RankEntry
    comparisons: int


def locate_object(rlist: RankList, o: int, o_location: Point) -> Located:
    """Find ``o`` in ``rlist`` by its minimum distance to the list's cell.

    Binary search over the block minimum distances bounds the range of blocks
    whose entries can carry that distance; the range is then scanned.
    """
    d = min_dist(o_location, Cell(*rlist.cell))
    bmin = rlist._block_min_list
    lo = max(bisect_left(bmin, d) - 1, 0)
    hi = max(bisect_right(bmin, d) - 1, 0)
    comparisons = 2 * max(1, len(bmin)).bit_length()
    ids = rlist.ids
    for j in range(lo, hi + 1):
        s, e = rlist.block_bounds(j)
        hit = np.flatnonzero(ids[s:e] == o)
        comparisons += e - s if len(hit) == 0 else int(hit[0]) + 1
        if len(hit):
            k = s + int(hit[0])
            entry = RankEntry(int(o), int(rlist.lower[k]), float(rlist.mind[k]))
            return Located(j, int(hit[0]), entry, comparisons)
    raise LookupError(f"object {o} not found in {rlist!r}")


def first_block_at_or_beyond(rlist: RankList, distance: float) -> int:
    """Index of the first block whose minimum distance is >= ``distance``."""
    return bisect_left(rlist._block_min_list, distance)


def block_upper_rank(rlist: RankList, j: int, other: RankList) -> int:
    """Upper estimate of the lower rank bound, in ``other``, of any member of block ``j``.

    Every member lies in the block MBR, so its minimum distance to the other
    cell is at most the MBR-to-cell maximum distance; the first block of
    ``other`` starting at or beyond that distance therefore starts with an
    entry whose lower rank is no smaller than any member's.  Returns N + 1
    when no such block exists.
    """
    reach = max_dist_rect(Cell(*map(float, rlist.mbr[j])), Cell(*other.cell))
    k = first_block_at_or_beyond(other, reach)
    if k >= other.n_blocks:
        return other.n + 1
    return int(other.lower[other.starts[k]])


class IrfIndex:
    """Quadtree over the dataspace plus the rank list of every leaf."""

    def __init__(self, objects: ObjectSet, tree: Quadtree, config: PartitionConfig,
                 max_cached_entries: int = DEFAULT_CACHE_ENTRIES):
        self.objects = objects
        self.tree = tree
        self.config = config
        self.max_cached_entries = max_cached_entries
        self._lists: OrderedDict[tuple, RankList] = OrderedDict()
        self._pinned: set[tuple] = set()
        self.lists_built = 0
        self.lists_ns = 0

    @property
    def n(self) -> int:
        return self.objects.n

    @property
    def build_ns(self) -> int:
        """Time spent materialising the tree and rank lists on demand so far."""
        return self.tree.build_ns + self.lists_ns

    def leaf_for(self, x: float, y: float) -> QuadtreeNode:
        return self.tree.locate(x, y)

    def list_for(self, leaf: QuadtreeNode) -> RankList:
        key = leaf.key
        lst = self._lists.get(key)
        if lst is not None:
            self._lists.move_to_end(key)
            return lst
        t0 = time.perf_counter_ns()
        lst = RankList.build(self.objects, leaf.cell, self.config.block_size)
        self.lists_ns += time.perf_counter_ns() - t0
        self.lists_built += 1
        self._lists[key] = lst
        self._trim()
        return lst

    def list_at(self, x: float, y: float) -> RankList:
        return self.list_for(self.leaf_for(x, y))

    def _trim(self):
        budget = max(self.max_cached_entries // max(self.n, 1), 1)
        while len(self._lists) > budget:
            for key in self._lists:
                if key not in self._pinned:
                    del self._lists[key]
                    break
            else:
                return

    def materialize(self) -> "IrfIndex":
        """Expand the full tree and build every rank list (memory permitting)."""
        leaves = list(self.tree.leaves())
        need = len(leaves) * self.n
        if need > self.max_cached_entries:
            raise MemoryError(
                f"{len(leaves)} leaves x {self.n} objects = {need} entries exceeds the "
                f"cap of {self.max_cached_entries}")
        for leaf in leaves:
            self.list_for(leaf)
        self._pinned.update(leaf.key for leaf in leaves)
        return self

    def cached_lists(self) -> dict[tuple, RankList]:
        return dict(self._lists)

    # -- persistence ---------------------------------------------------

    def save(self, path) -> None:
        save(self, path)

    @classmethod
    def load(cls, path) -> "IrfIndex":
        return load(path)


def build_index(objects: ObjectSet, config: PartitionConfig, lazy: bool = True,
                materialize: bool = False,
                max_cached_entries: int = DEFAULT_CACHE_ENTRIES) -> IrfIndex:
    tree = build_quadtree(objects, config, lazy=lazy and not materialize)
    index = IrfIndex(objects, tree, config, max_cached_entries)
    if materialize:
        index.materialize()
    return index


# -- binary format ----------------------------------------------------------
#
# little endian:
#   header  "IRF1" | version u32 | N u64 | eps f64 | B u32 | leaf count u64 | max_depth u32
#   root cell 4 x f64, objects N x (f64, f64)
#   per leaf: depth u8 | ix u32 | iy u32 | capped u8 | cell 4 x f64 | entries u64
#             then entries x (id u32 | lower rank u32 | min distance f64)
#   trailer CRC32 (u32) of every preceding byte
# A leaf written with zero entries has its list rebuilt on demand after load.

_HEADER = struct.Struct("<4sIQdIQI")
_LEAF = struct.Struct("<BIIB4dQ")
_ENTRY = np.dtype([("id", "<u4"), ("lower", "<u4"), ("mind", "<f8")])


def save(index: IrfIndex, path) -> None:
    leaves = list(index.tree.leaves())
    buf = io.BytesIO()
    cfg = index.config
    buf.write(_HEADER.pack(MAGIC, VERSION, index.n, float(cfg.epsilon), cfg.block_size,
                           len(leaves), cfg.max_depth))
    buf.write(struct.pack("<4d", *index.tree.root.cell))
    buf.write(index.objects.xy.astype("<f8").tobytes())
    cached = index._lists
    for leaf in leaves:
        lst = cached.get(leaf.key)
        count = lst.n if lst is not None else 0
        buf.write(_LEAF.pack(leaf.depth, leaf.ix, leaf.iy, int(leaf.capped), *leaf.cell, count))
        if lst is not None:
            rec = np.empty(count, dtype=_ENTRY)
            rec["id"] = lst.ids
            rec["lower"] = lst.lower
            rec["mind"] = lst.mind
            buf.write(rec.tobytes())
    payload = buf.getvalue()
    Path(path).write_bytes(payload + struct.pack("<I", zlib.crc32(payload)))


def load(path) -> IrfIndex:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + 4:
        raise IndexFormatError(f"{path}: file too short ({len(data)} bytes)")
    magic, version, n, eps, bsize, n_leaves, max_depth = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise IndexFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise IndexFormatError(f"{path}: unsupported version {version}")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise IndexFormatError(f"{path}: checksum mismatch (file corrupted)")
    try:
        off = _HEADER.size
        root = struct.unpack_from("<4d", payload, off)
        off += 32
        xy = np.frombuffer(payload, dtype="<f8", count=2 * n, offset=off).reshape(n, 2)
        off += 16 * n
        objects = ObjectSet(xy.astype(np.float64))
        config = PartitionConfig(epsilon=eps, max_depth=max_depth, block_size=bsize)
        tree = Quadtree(objects, config, Cell(*root))
        tree.root._pending = None
        lists = []
        for _ in range(n_leaves):
            depth, ix, iy, capped, x0, y0, x1, y1, count = _LEAF.unpack_from(payload, off)
            off += _LEAF.size
            leaf = _graft(tree, depth, ix, iy)
            leaf.capped = bool(capped)
            if leaf.cell != (x0, y0, x1, y1):
                raise IndexFormatError(f"{path}: leaf {leaf.key} cell mismatch")
            if count:
                rec = np.frombuffer(payload, dtype=_ENTRY, count=count, offset=off)
                off += count * _ENTRY.itemsize
                lists.append((leaf, rec["id"].astype(np.int32), rec["lower"].astype(np.int32),
                              rec["mind"].astype(np.float64)))
        if off != len(payload):
            raise IndexFormatError(f"{path}: {len(payload) - off} trailing bytes")
    except struct.error as exc:
        raise IndexFormatError(f"{path}: truncated ({exc})") from exc
    index = IrfIndex(objects, tree, config)
    for leaf, ids, lower, mind in lists:
        index._lists[leaf.key] = RankList(leaf.cell, ids, lower, mind, bsize, objects.xy)
        index._pinned.add(leaf.key)
    return index


def _graft(tree: Quadtree, depth: int, ix: int, iy: int) -> QuadtreeNode:
    node = tree.root
    for level in range(depth - 1, -1, -1):
        if node.children is None:
            xmin, ymin, xmax, ymax = node.cell
            xm, ym = (xmin + xmax) / 2, (ymin + ymax) / 2
            d, cx, cy = node.depth + 1, 2 * node.ix, 2 * node.iy
            node.children = [
                QuadtreeNode((xmin, ym, xm, ymax), d, cx, cy + 1),
                QuadtreeNode((xm, ym, xmax, ymax), d, cx + 1, cy + 1),
                QuadtreeNode((xmin, ymin, xm, ym), d, cx, cy),
                QuadtreeNode((xm, ymin, xmax, ym), d, cx + 1, cy),
            ]
        right = (ix >> level) & 1
        top = (iy >> level) & 1
        node = node.children[(1 if right else 0) if top else (3 if right else 2)]
    return node


def structurally_equal(a: IrfIndex, b: IrfIndex) -> bool:
    """Same objects, configuration, leaves and materialised rank lists."""
    if a.objects != b.objects or a.config != b.config:
        return False
    la = [(n.key, n.cell, n.capped) for n in a.tree.leaves()]
    lb = [(n.key, n.cell, n.capped) for n in b.tree.leaves()]
    if la != lb:
        return False
    ka, kb = set(a._lists), set(b._lists)
    if ka != kb:
        return False
    return all(a._lists[k] == b._lists[k] for k in ka)
