"""Approximate top-m popularity on the Inverted Rank File.

An object's approximate rank for a query is ``c * r_low`` with
``c = 1 + eps/2`` and ``r_low`` its lower rank bound in the query's leaf.
Its contribution is ``zeta = N + 1 - c * r_low`` when it lies in the query's
range, else 0.  Scores are window sums of contributions; popularity is the
score divided by the current window fill.

Per object the engine keeps the integer pair ``(count, rank_sum)`` over the
window, and the score is always evaluated as ``(N+1)*count - c*rank_sum``.
Incremental updates and from-scratch recomputation therefore produce
bit-identical scores, which keeps tie-breaking (smaller id first) consistent.

Outsiders (non-results) are covered by upper bounds on their scores.  With
``bounds="global"`` a single bound ``U`` covers all of them: every shift it
moves by the largest possible gain and it is tightened whenever validation
objects are evaluated.  With ``bounds="regional"`` (the default) objects are
split into small spatial groups, each carrying its own bound.  A group's
bound only moves when the new or the evicted query can reach it, so a query
landing far from the current results leaves their competitors' bounds alone.
Float arithmetic on gains and bounds is only used for pruning decisions, each
padded by ``tol`` in the conservative direction.
"""

from __future__ import annotations

import heapq
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .exact import RangeSearcher, top_m
from .geometry import ObjectSet
from .irf import IrfIndex, RankList, block_upper_rank
from .window import RangeQuery, SlidingWindow


class Tier(str, Enum):
    BSR = "bsr-safe"
    OSR = "osr-safe"
    VO_EMPTY = "vo-empty"
    VO_UPDATE = "vo-update"


def rank_factor(epsilon: float) -> float:
    return 1.0 + epsilon / 2.0


def approx_score(count, rank_sum, n: int, c: float):
    """Window score from the integer state; works on scalars and arrays alike."""
    return (n + 1) * count - c * rank_sum


def approx_rank(o: int, q: RangeQuery, index: IrfIndex) -> float | None:
    x, y = index.objects.xy[o]
    if math.sqrt((x - q.location.x) ** 2 + (y - q.location.y) ** 2) > q.radius:
        return None
    rl = index.list_at(q.location.x, q.location.y)
    return rank_factor(index.config.epsilon) * int(rl.rank_of[o])


def approx_popularity(o: int, window, index: IrfIndex) -> float:
    """Approximate popularity of ``o`` recomputed from the window's queries."""
    queries = list(window)
    if not queries:
        raise ValueError("popularity is undefined for an empty window")
    n = index.n
    c = rank_factor(index.config.epsilon)
    cnt = rsum = 0
    for q in queries:
        if approx_rank(o, q, index) is not None:
            cnt += 1
            rsum += int(index.list_at(q.location.x, q.location.y).rank_of[o])
    return approx_score(cnt, rsum, n, c) / len(queries)


def approx_state(index: IrfIndex, queries, searcher: RangeSearcher | None = None):
    """From-scratch ``(count, rank_sum)`` arrays for every object."""
    searcher = searcher or RangeSearcher(index.objects)
    n = index.n
    cnt = np.zeros(n, dtype=np.int64)
    rsum = np.zeros(n, dtype=np.int64)
    for q in queries:
        ids, _ = searcher.within(q.location.x, q.location.y, q.radius)
        rl = index.list_at(q.location.x, q.location.y)
        cnt[ids] += 1
        rsum[ids] += rl.rank_of[ids]
    return cnt, rsum


def approx_top_m(index: IrfIndex, queries, m: int, searcher: RangeSearcher | None = None):
    """From-scratch approximate top-m as ``[(id, popularity)]``."""
    queries = list(queries)
    cnt, rsum = approx_state(index, queries, searcher)
    scores = approx_score(cnt, rsum, index.n, rank_factor(index.config.epsilon))
    return [(int(o), float(scores[o]) / len(queries)) for o in top_m(scores, m)]


def reusable(y_shared: int, w: int) -> bool:
    """Whether a cached popularity sharing ``y_shared`` queries with a window of ``w`` may be reused."""
    return 3 * y_shared >= 2 * w


# -- window entries -------------------------------------------------------


@dataclass(eq=False)
class _Slot:
    t: int
    query: RangeQuery
    leaf: object
    ids: np.ndarray  # objects inside the range, ascending
    ranks: np.ndarray  # their lower ranks in the leaf's list
    floor: float  # lowest contribution any object can receive from this query

    @property
    def hits(self) -> int:
        return len(self.ids)

    @property
    def x(self):
        return self.query.location.x

    @property
    def y(self):
        return self.query.location.y

    @property
    def r(self):
        return self.query.radius


def _contrib(ids: np.ndarray, slot: _Slot) -> tuple[np.ndarray, np.ndarray]:
    """(in-range mask, lower ranks or 0) of ``ids`` for ``slot``'s query."""
    if slot.hits == 0:
        z = np.zeros(len(ids), dtype=np.int64)
        return z.astype(bool), z
    pos = np.minimum(np.searchsorted(slot.ids, ids), slot.hits - 1)
    inr = slot.ids[pos] == ids
    return inr, np.where(inr, slot.ranks[pos], 0)


class _History:
    """Ring of the last ``2 * capacity`` queries: the window and those recently evicted."""

    def __init__(self, capacity: int, xy: np.ndarray):
        size = 2 * capacity
        self.xy = xy
        self.q = np.zeros((size, 3))
        self.t = np.zeros(size, dtype=np.int64)  # 0 marks an empty position
        self.slots: list[_Slot | None] = [None] * size

    def add(self, slot: _Slot):
        k = slot.t % len(self.t)
        self.q[k] = (slot.x, slot.y, slot.r)
        self.t[k] = slot.t
        self.slots[k] = slot

    def states(self, ids: np.ndarray, base: np.ndarray, add_from: np.ndarray,
               gone_after: np.ndarray, first: int) -> np.ndarray:
        """``base`` plus contributions of queries with t >= add_from, minus
        those with gone_after < t < first (per row)."""
        out = base.copy()
        if len(ids) == 0:
            return out
        t = self.t
        sign = (t >= add_from[:, None]).astype(np.int64)
        sign -= (t > gone_after[:, None]) & (t < first)
        sign[:, t == 0] = 0
        xy = self.xy[ids]
        dx = xy[:, :1] - self.q[:, 0]
        dy = xy[:, 1:] - self.q[:, 1]
        # generous prefilter; membership is settled by each query's own id list
        active = (dx * dx + dy * dy <= (self.q[:, 2] * (1 + 1e-9)) ** 2) & (sign != 0)
        for j in np.flatnonzero(active.any(axis=0)).tolist():
            rows = np.flatnonzero(active[:, j])
            inr, rl = _contrib(ids[rows], self.slots[j])
            sg = sign[rows, j]
            out[rows, 0] += sg * inr
            out[rows, 1] += sg * rl
        return out


# -- object groups --------------------------------------------------------


@dataclass(frozen=True)
class ObjectGroups:
    """Spatially compact groups of at most ``size`` objects (median splits)."""

    of: np.ndarray  # object id -> group
    ptr: np.ndarray  # group g holds members[ptr[g]:ptr[g+1]]
    members: np.ndarray
    mbr: np.ndarray  # (groups, 4)
    centers: cKDTree
    reach: float  # largest center-to-corner distance of any group

    @classmethod
    def build(cls, xy: np.ndarray, size: int = 16) -> "ObjectGroups":
        if size < 1:
            raise ValueError(f"group size must be >= 1, got {size}")
        parts = []
        stack = [np.arange(len(xy))]
        while stack:
            idx = stack.pop()
            if len(idx) <= size:
                parts.append(idx)
                continue
            pts = xy[idx]
            axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
            order = np.argsort(pts[:, axis], kind="stable")
            half = len(idx) // 2
            stack.append(idx[order[half:]])
            stack.append(idx[order[:half]])
        members = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        sizes = np.array([len(p) for p in parts], dtype=np.int64)
        ptr = np.concatenate([[0], np.cumsum(sizes)])
        of = np.empty(len(xy), dtype=np.int64)
        of[members] = np.repeat(np.arange(len(parts)), sizes)
        starts = ptr[:-1]
        px, py = xy[members, 0], xy[members, 1]
        mbr = np.column_stack([
            np.minimum.reduceat(px, starts), np.minimum.reduceat(py, starts),
            np.maximum.reduceat(px, starts), np.maximum.reduceat(py, starts),
        ]) if len(parts) else np.zeros((0, 4))
        cxy = np.column_stack([(mbr[:, 0] + mbr[:, 2]) / 2, (mbr[:, 1] + mbr[:, 3]) / 2])
        half = np.hypot(mbr[:, 2] - mbr[:, 0], mbr[:, 3] - mbr[:, 1]) / 2
        reach = float(half.max()) if len(half) else 0.0
        return cls(of, ptr, members, mbr, cKDTree(cxy if len(cxy) else np.zeros((0, 2))), reach)

    def touching(self, x: float, y: float, r: float) -> np.ndarray:
        """Groups whose box may intersect the disc (a superset, ascending)."""
        cand = self.centers.query_ball_point((x, y), (r + self.reach) * (1 + 1e-9) + 1e-12)
        return np.sort(np.asarray(cand, dtype=np.int64))

    def __len__(self):
        return len(self.ptr) - 1

    def members_of(self, groups: np.ndarray) -> np.ndarray:
        if len(groups) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([self.members[self.ptr[g]:self.ptr[g + 1]] for g in groups.tolist()])


def _point_rects(x: float, y: float, mbr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(min, max) distances from a point to each rectangle."""
    x0, y0, x1, y1 = mbr[:, 0], mbr[:, 1], mbr[:, 2], mbr[:, 3]
    dx = np.maximum(np.maximum(x0 - x, x - x1), 0.0)
    dy = np.maximum(np.maximum(y0 - y, y - y1), 0.0)
    fx = np.maximum(np.abs(x - x0), np.abs(x - x1))
    fy = np.maximum(np.abs(y - y0), np.abs(y - y1))
    return np.sqrt(dx * dx + dy * dy), np.sqrt(fx * fx + fy * fy)


def _cell_rects(cell, mbr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(min, max) distances between a cell and each rectangle."""
    cx0, cy0, cx1, cy1 = cell
    x0, y0, x1, y1 = mbr[:, 0], mbr[:, 1], mbr[:, 2], mbr[:, 3]
    dx = np.maximum(np.maximum(cx0 - x1, x0 - cx1), 0.0)
    dy = np.maximum(np.maximum(cy0 - y1, y0 - cy1), 0.0)
    fx = np.maximum(x1 - cx0, cx1 - x0)
    fy = np.maximum(y1 - cy0, cy1 - y0)
    return np.sqrt(dx * dx + dy * dy), np.sqrt(fx * fx + fy * fy)


# -- gain queue -----------------------------------------------------------

OBJECT, BLOCK, FRONTIER = 0, 1, 2


class GainQueue:
    """Max-queue of gain upper bounds over the new query's rank list.

    Holds objects (exact gains), blocks (bounds over their members) and one
    frontier element standing for the not-yet-scanned tail of the list.
    Equal keys pop objects before blocks, then by smaller id / block index.
    """

    def __init__(self):
        self._heap: list = []
        self.pushed_blocks = 0
        self.pushed_objects = 0

    def push(self, key: float, kind: int, payload: int):
        if kind == BLOCK:
            self.pushed_blocks += 1
        elif kind == OBJECT:
            self.pushed_objects += 1
        heapq.heappush(self._heap, (-key, kind, payload))

    def top(self):
        k, kind, payload = self._heap[0]
        return -k, kind, payload

    def pop(self):
        k, kind, payload = heapq.heappop(self._heap)
        return -k, kind, payload

    def __len__(self):
        return len(self._heap)

    def __bool__(self):
        return bool(self._heap)


@dataclass
class StepStats:
    tier: Tier
    opq: int
    bsr: int
    osr: int | None
    vo: int
    reused: int
    blocks_scanned: int
    hot_groups: int = 0


@dataclass(frozen=True)
class ApproxStep:
    result: list[tuple[int, float]]
    stats: StepStats
    warmup: bool


@dataclass
class _Shift:
    """Per-shift working state threaded through the three tiers."""

    new: _Slot
    old: _Slot | None
    ln: RankList
    lo: RankList | None
    pq: GainQueue
    next_block: int = 0
    s_m_minus: float = 0.0
    threshold: float = 0.0
    scanned: int = 0
    expanded: set = field(default_factory=set)
    regional: float | None = None


class ApproxEngine:
    """Incremental approximate top-m over a count-based window."""

    def __init__(self, index: IrfIndex, window_size: int, m: int,
                 searcher: RangeSearcher | None = None, reuse: bool = True,
                 bounds: str = "regional", group_size: int = 16):
        self.index = index
        self.objects: ObjectSet = index.objects
        self.n = index.n
        self.c = rank_factor(index.config.epsilon)
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        if bounds not in ("regional", "global"):
            raise ValueError(f"bounds must be 'regional' or 'global', got {bounds!r}")
        self.m = min(m, self.n)
        self.window = SlidingWindow(window_size)
        self.searcher = searcher or RangeSearcher(self.objects)
        self.tol = 1e-7 * (self.n + 1)
        self.reuse = reuse
        self.bounds = bounds
        self._t = 0
        # results: id -> [count, rank_sum]
        self.results: dict[int, list[int]] = {o: [0, 0] for o in range(self.m)}
        start = 0.0 if self.m < self.n else -math.inf
        self._u = start
        self.groups = ObjectGroups.build(self.objects.xy, group_size) if bounds == "regional" else None
        self.group_ub = np.full(len(self.groups), start) if self.groups is not None else None
        self._history = _History(window_size, self.objects.xy)
        self.lookup: OrderedDict[int, tuple[int, int, int]] = OrderedDict()
        self.retention = max(1, (2 * window_size) // 3)

    @property
    def clock(self) -> int:
        """Number of queries processed so far (the id of the latest window)."""
        return self._t

    @property
    def outsider_bound(self) -> float:
        """Upper bound on the score of every non-result object."""
        if self.group_ub is not None:
            return float(self.group_ub.max()) if len(self.group_ub) else -math.inf
        return self._u

    # -- scores -----------------------------------------------------------

    def score(self, state) -> float:
        return approx_score(state[0], state[1], self.n, self.c)

    def popularity(self, o: int) -> float:
        st = self.results.get(o)
        if st is None:
            st = self._exact_states(np.array([o]))[0]
        return self.score(st) / max(len(self.window), 1)

    def _ranked_results(self) -> list[tuple[int, float]]:
        items = sorted(self.results.items(), key=lambda kv: (-self.score(kv[1]), kv[0]))
        return [(o, self.score(st)) for o, st in items]

    @property
    def result(self) -> list[tuple[int, float]]:
        fill = max(len(self.window), 1)
        return [(o, s / fill) for o, s in self._ranked_results()]

    # -- exact evaluation -------------------------------------------------

    def _exact_states(self, ids: np.ndarray) -> np.ndarray:
        """From-scratch (count, rank_sum) over the current window for ``ids``."""
        ids = np.asarray(ids, dtype=np.int64)
        first = self._t - len(self.window) + 1
        k = len(ids)
        return self._history.states(ids, np.zeros((k, 2), np.int64),
                                    np.full(k, first), np.full(k, first), first)

    def _reuse_from(self, t0: int) -> bool:
        first = self._t - len(self.window) + 1
        return t0 <= self._t and reusable(max(0, t0 - first + 1), len(self.window))

    def reuse_popularity(self, o: int, cached: tuple[int, int, int]) -> float | None:
        """Popularity of ``o`` now, shifted forward from a cached (t, count, rank_sum).

        None when the cached window shares too few queries with the current one.
        """
        t0 = cached[0]
        if not self._reuse_from(t0):
            return None
        first = self._t - len(self.window) + 1
        st = self._history.states(np.array([o]), np.array([cached[1:]], dtype=np.int64),
                                  np.array([t0 + 1]), np.array([t0 - self.window.capacity]), first)
        return float(self.score(st[0])) / len(self.window)

    def _evaluate(self, ids: list[int]) -> tuple[dict[int, tuple[int, int]], int]:
        """Exact states for ``ids``, shifting cached values forward where allowed."""
        first = self._t - len(self.window) + 1
        cap = self.window.capacity
        k = len(ids)
        base = np.zeros((k, 2), np.int64)
        add_from = np.full(k, first)
        gone_after = np.full(k, first)
        reused = 0
        if self.reuse:
            for i, o in enumerate(ids):
                cached = self.lookup.get(o)
                if cached is not None and self._reuse_from(cached[0]):
                    t0 = cached[0]
                    base[i] = cached[1:]
                    add_from[i] = t0 + 1
                    gone_after[i] = t0 - cap
                    reused += 1
        arr = self._history.states(np.asarray(ids, dtype=np.int64), base, add_from, gone_after, first)
        states = {o: tuple(st) for o, st in zip(ids, arr.tolist())}
        for o, st in states.items():
            self._remember(o, st)
        return states, reused

    def _remember(self, o: int, st):
        self.lookup[o] = (self._t, int(st[0]), int(st[1]))
        self.lookup.move_to_end(o)

    def _expire_lookup(self):
        horizon = self._t - self.retention
        while self.lookup:
            o, (t0, _, _) = next(iter(self.lookup.items()))
            if t0 > horizon:
                break
            del self.lookup[o]

    # -- gain bounds ------------------------------------------------------

    def _zeta_cap(self, r_low: int) -> float:
        return (self.n + 1) - self.c * r_low

    def _block_gain(self, sh: _Shift, j: int) -> float:
        """Upper bound on the gain of every member of block ``j`` of the new query's list."""
        ln, new, old = sh.ln, sh.new, sh.old
        mbr = ln.mbr[j]
        zn = self._zeta_cap(int(ln.lower[ln.starts[j]]))
        near, far = _disc_rect(new.x, new.y, mbr)
        if near > new.r:
            up = 0.0
        elif far <= new.r:
            up = zn
        else:
            up = max(0.0, zn)
        if old is None:
            return up
        zo = self._zeta_cap(block_upper_rank(ln, j, sh.lo))
        near, far = _disc_rect(old.x, old.y, mbr)
        if near > old.r:
            low = 0.0
        elif far <= old.r:
            low = zo
        else:
            low = min(0.0, zo)
        return up - max(old.floor, low)

    def _frontier_gain(self, sh: _Shift, j: int) -> float:
        """Upper bound on the gain of any member of blocks ``j..``."""
        zn = max(0.0, self._zeta_cap(int(sh.ln.lower[sh.ln.starts[j]])))
        return zn - (sh.old.floor if sh.old is not None else 0.0)

    def _scan_block(self, sh: _Shift):
        j = sh.next_block
        sh.pq.push(self._block_gain(sh, j), BLOCK, j)
        sh.next_block += 1
        sh.scanned += 1

    def _push_frontier(self, sh: _Shift):
        if sh.next_block < sh.ln.n_blocks:
            sh.pq.push(self._frontier_gain(sh, sh.next_block), FRONTIER, sh.next_block)

    def _expand_block(self, sh: _Shift, j: int):
        s, e = sh.ln.block_bounds(j)
        ids = sh.ln.ids[s:e].astype(np.int64)
        gains = self._gains(ids, sh)
        for o, g in zip(ids.tolist(), gains.tolist()):
            if o not in self.results:
                sh.pq.push(g, OBJECT, o)

    def _gains(self, ids: np.ndarray, sh: _Shift) -> np.ndarray:
        inr, rl = _contrib(ids, sh.new)
        g = np.where(inr, (self.n + 1) - self.c * rl, 0.0)
        if sh.old is not None:
            inr, rl = _contrib(ids, sh.old)
            g -= np.where(inr, (self.n + 1) - self.c * rl, 0.0)
        return g

    def _advance(self, sh: _Shift) -> tuple[float, int, int] | None:
        """Pop until an object is on top; return its (gain, kind, id) without removing it."""
        pq = sh.pq
        while pq:
            key, kind, payload = pq.top()
            if kind == OBJECT:
                return key, kind, payload
            pq.pop()
            if kind == BLOCK:
                self._expand_block(sh, payload)
            else:
                self._scan_block(sh)
                self._push_frontier(sh)
        return None

    # -- the three tiers --------------------------------------------------

    def _safe_rank(self, s_m_minus: float, rival: float) -> int:
        """Largest approximate rank that keeps a result ahead of a rival score."""
        x = (self.n + 1) + s_m_minus - rival - self.tol
        if x >= self.n + 1:
            return self.n + 1
        if x < 0:
            return 0
        return int(math.floor(x))

    def block_safe_rank(self, sh: _Shift) -> tuple[int, float]:
        """Scan the new query's blocks until no unscanned block can beat the best gain."""
        ln = sh.ln
        while True:
            self._scan_block(sh)
            best = sh.pq.top()[0]
            if sh.next_block >= ln.n_blocks or self._frontier_gain(sh, sh.next_block) < best:
                break
        self._push_frontier(sh)
        best = sh.pq.top()[0]
        return self._safe_rank(sh.s_m_minus, self._rival(sh, best)), best

    def object_safe_rank(self, sh: _Shift) -> tuple[int, float]:
        head = self._advance(sh)
        if head is None:
            # every outsider already ruled out of the queue: the naive bound
            gain_up = float(self.n)
        else:
            gain_up = head[0]
        return self._safe_rank(sh.s_m_minus, self._rival(sh, gain_up)), gain_up

    def _rival(self, sh: _Shift, gain_up: float) -> float:
        """Upper bound on any outsider's score after the shift."""
        bound = self.outsider_bound + gain_up
        if sh.regional is not None:
            bound = min(bound, sh.regional)
        return bound

    def group_drift(self, sh: _Shift) -> np.ndarray:
        """Per-group upper bound on the gain of any member over this shift."""
        g = self.groups
        n1, c, n = self.n + 1, self.c, self.n
        drift = np.zeros(len(g))
        new, ln = sh.new, sh.ln
        hit = g.touching(new.x, new.y, new.r)
        near, far = _point_rects(new.x, new.y, g.mbr[hit])
        keep = near <= new.r
        hit, far = hit[keep], far[keep]
        if len(hit):
            closest, _ = _cell_rects(ln.cell, g.mbr[hit])
            p = np.minimum(np.searchsorted(ln.mind, closest, side="left"), n - 1)
            zn = n1 - c * ln.lower[p].astype(np.float64)
            drift[hit] = np.where(far <= new.r, zn, np.maximum(zn, 0.0))
        old, lo = sh.old, sh.lo
        if old is None:
            return drift
        hit = g.touching(old.x, old.y, old.r)
        near, far = _point_rects(old.x, old.y, g.mbr[hit])
        keep = near <= old.r
        hit, far = hit[keep], far[keep]
        if len(hit):
            _, farthest = _cell_rects(lo.cell, g.mbr[hit])
            p = np.searchsorted(lo.mind, farthest, side="left")
            r_up = np.where(p < n, lo.lower[np.minimum(p, n - 1)], n)
            zo = n1 - c * np.minimum(r_up, old.hits).astype(np.float64)
            inside = far <= old.r
            drift[hit] -= np.where(inside, np.maximum(zo, old.floor),
                                   np.maximum(np.minimum(zo, 0.0), old.floor))
        return drift

    def regional_validation(self, sh: _Shift, drift: np.ndarray):
        """Validation objects drawn from the groups whose bound reaches the threshold.

        Returns (validation ids, hot groups, all outsiders of hot groups,
        their optimistic scores).
        """
        cut = sh.threshold - self.tol
        hot = np.flatnonzero(self.group_ub + drift >= cut)
        ids = self.groups.members_of(hot)
        if len(ids):
            ids = ids[~np.isin(ids, np.fromiter(self.results, dtype=np.int64))]
        optimistic = self.group_ub[self.groups.of[ids]] + self._gains(ids, sh)
        return ids[optimistic >= cut], hot, ids, optimistic

    def validation_objects(self, sh: _Shift) -> tuple[list[int], float]:
        """Outsiders whose optimistic score reaches the current m-th score.

        Returns them with the largest gain bound left in the queue when the
        search stopped (``-inf`` if it ran dry).
        """
        vo = []
        while True:
            head = self._advance(sh)
            if head is None:
                return vo, -math.inf
            key, _, o = head
            if self._u + key < sh.threshold - self.tol:
                return vo, key
            sh.pq.pop()
            vo.append(o)

    # -- step -------------------------------------------------------------

    def _slot(self, q: RangeQuery) -> _Slot:
        leaf = self.index.leaf_for(q.location.x, q.location.y)
        ids, _ = self.searcher.within(q.location.x, q.location.y, q.radius)
        ranks = self.index.list_for(leaf).rank_of[ids].astype(np.int64)
        # ranks within a range never exceed the number of qualifying objects
        floor = min(0.0, (self.n + 1) - self.c * len(ids))
        return _Slot(self._t, q, leaf, ids, ranks, floor)

    def step(self, qn: RangeQuery) -> ApproxStep:
        self._t += 1
        new = self._slot(qn)
        old = self.window.push(new)
        self._history.add(new)
        self._expire_lookup()

        ids = np.fromiter(self.results, dtype=np.int64, count=len(self.results))
        states = np.array([self.results[o] for o in ids.tolist()], dtype=np.int64).reshape(-1, 2)
        if old is not None:
            inr, rl = _contrib(ids, old)
            states[:, 0] -= inr
            states[:, 1] -= rl
        s_minus = approx_score(states[:, 0], states[:, 1], self.n, self.c)
        inr_n, rl_n = _contrib(ids, new)
        states[:, 0] += inr_n
        states[:, 1] += rl_n
        for o, st in zip(ids.tolist(), states.tolist()):
            self.results[o] = st
        opq = len(ids)

        ln = self.index.list_for(new.leaf)
        lo = self.index.list_for(old.leaf) if old is not None else None
        sh = _Shift(new, old, ln, lo, GainQueue())
        sh.s_m_minus = float(s_minus.min()) if len(ids) else math.inf
        r_hat = self.c * rl_n

        if old is not None and old.leaf is new.leaf and np.array_equal(old.ids, new.ids):
            # same leaf, same range: every contribution cancels, nothing can move
            stats = StepStats(Tier.BSR, opq, self.n + 1, None, 0, 0, 0)
            return ApproxStep(self.result, stats, warmup=not self.window.full)

        drift = None
        if self.groups is not None:
            drift = self.group_drift(sh)
            sh.regional = float((self.group_ub + drift).max()) if len(drift) else -math.inf

        bsr, gain_b = self.block_safe_rank(sh)
        osr = None
        vo: list[int] = []
        reused = hot = 0
        if np.all(inr_n & (r_hat <= bsr)):
            tier = Tier.BSR
            self._drift(drift, gain_b)
        else:
            osr, gain_o = self.object_safe_rank(sh)
            if np.all(inr_n & (r_hat <= osr)):
                tier = Tier.OSR
                self._drift(drift, gain_o)
            else:
                sh.threshold = min(self.score(st) for st in self.results.values())
                if drift is None:
                    vo, reused = self._validate_global(sh)
                else:
                    vo, reused, hot = self._validate_regional(sh, drift)
                tier = Tier.VO_UPDATE if len(vo) else Tier.VO_EMPTY
                opq += len(vo)
        if self.m >= self.n:
            self._u = -math.inf
            if self.group_ub is not None:
                self.group_ub[:] = -math.inf

        stats = StepStats(tier, opq, bsr, osr, len(vo), reused, sh.scanned, hot)
        return ApproxStep(self.result, stats, warmup=not self.window.full)

    def _drift(self, drift, gain_up: float):
        if drift is None:
            self._u += gain_up
        else:
            self.group_ub += drift

    def _merge(self, vstates: dict) -> dict:
        """Fold evaluated objects into the results; return the displaced ones."""
        pool = dict(self.results)
        pool.update({o: list(st) for o, st in vstates.items()})
        ranked = sorted(pool, key=lambda o: (-self.score(pool[o]), o))
        self.results = {o: pool[o] for o in ranked[:self.m]}
        out = {o: pool[o] for o in ranked[self.m:]}
        for o, st in out.items():
            self._remember(o, st)
        return out

    def _validate_global(self, sh: _Shift):
        vo, rest = self.validation_objects(sh)
        examined = self._u + rest
        reused = 0
        if vo:
            vstates, reused = self._evaluate(vo)
            for st in self._merge(vstates).values():
                examined = max(examined, self.score(st))
        self._u = examined
        return vo, reused

    def _validate_regional(self, sh: _Shift, drift: np.ndarray):
        vo, hot, ids, optimistic = self.regional_validation(sh, drift)
        reused = 0
        out: dict = {}
        if len(vo):
            vstates, reused = self._evaluate(vo.tolist())
            out = self._merge(vstates)
        ub = self.group_ub + drift
        ub[hot] = -math.inf
        # unevaluated members of hot groups keep their optimistic scores
        keep = ~np.isin(ids, vo)
        np.maximum.at(ub, self.groups.of[ids[keep]], optimistic[keep])
        if out:
            oid = np.fromiter(out, dtype=np.int64, count=len(out))
            sc = np.array([self.score(st) for st in out.values()])
            np.maximum.at(ub, self.groups.of[oid], sc)
        self.group_ub = ub
        return vo.tolist(), reused, len(hot)


def _disc_rect(x: float, y: float, mbr) -> tuple[float, float]:
    """(min, max) distance from point (x, y) to rectangle ``mbr``."""
    x0, y0, x1, y1 = mbr
    dx = max(x0 - x, 0.0, x - x1)
    dy = max(y0 - y, 0.0, y - y1)
    fx = max(abs(x - x0), abs(x - x1))
    fy = max(abs(y - y0), abs(y - y1))
    return math.sqrt(dx * dx + dy * dy), math.sqrt(fx * fx + fy * fy)
