"""Exact baseline: rank every qualifying object of each arriving query.

Popularity is kept as an integer score sum ``S(o) = sum(N - r(o, q) + 1)`` over
the window; the reported popularity is ``S / |W|`` with ``|W|`` the current
fill, so ordering by ``S`` is ordering by popularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ObjectSet, dist_many
from .window import RangeQuery, SlidingWindow


class RangeSearcher:
    """Range queries over the object set with exact distance semantics.

    The kd-tree only proposes candidates (with a slightly inflated radius);
    membership is decided with the same distance formula used everywhere else.
    """

    def __init__(self, objects: ObjectSet):
        self.objects = objects
        self._tree = cKDTree(objects.xy)

    def within(self, x: float, y: float, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Ids (ascending) and distances of the objects within ``radius`` of (x, y)."""
        cand = self._tree.query_ball_point((x, y), radius * (1 + 1e-9) + 1e-300)
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        d = dist_many(self.objects.xy[cand], x, y)
        keep = d <= radius
        return cand[keep], d[keep]

    def count_within(self, x: float, y: float, radius: float) -> int:
        return len(self.within(x, y, radius)[0])


def ranked(ids: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order qualifying objects by (distance, id); returns (ids, 1-based ranks)."""
    order = np.lexsort((ids, d))
    return ids[order], np.arange(1, len(order) + 1, dtype=np.int64)


def rank_in_query(o: int, q: RangeQuery, objects: ObjectSet) -> int | None:
    d = dist_many(objects.xy, q.location.x, q.location.y)
    if d[o] > q.radius:
        return None
    ids = np.flatnonzero(d <= q.radius)
    order_ids, ranks = ranked(ids, d[ids])
    return int(ranks[np.flatnonzero(order_ids == o)[0]])


def popularity(o: int, window, objects: ObjectSet) -> float:
    """Exact popularity of ``o``, recomputed from scratch over the window's queries."""
    queries = list(window)
    if not queries:
        raise ValueError("popularity is undefined for an empty window")
    n = objects.n
    total = 0
    for q in queries:
        r = rank_in_query(o, q, objects)
        if r is not None:
            total += n - r + 1
    return total / len(queries)


def top_m(scores: np.ndarray, m: int) -> np.ndarray:
    """Ids of the ``m`` highest scores, ties broken by smaller id, best first."""
    n = len(scores)
    m = min(m, n)
    if m == 0:
        return np.empty(0, dtype=np.int64)
    if m < n:
        # the m-th largest score bounds the candidates; take all ties at it
        kth = np.partition(scores, n - m)[n - m]
        cand = np.flatnonzero(scores >= kth)
    else:
        cand = np.arange(n)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order[:m]].astype(np.int64)


@dataclass
class _Entry:
    query: RangeQuery
    ids: np.ndarray
    contrib: np.ndarray


@dataclass(frozen=True)
class ExactStep:
    result: list[tuple[int, float]]
    opq: int
    warmup: bool


class ExactEngine:
    """Incremental exact top-m popularity over a count-based window."""

    def __init__(self, objects: ObjectSet, window_size: int, m: int,
                 searcher: RangeSearcher | None = None):
        self.objects = objects
        self.m = m
        self.window = SlidingWindow(window_size)
        self.searcher = searcher or RangeSearcher(objects)
        self.scores = np.zeros(objects.n, dtype=np.int64)
        self.result: list[tuple[int, float]] = []

    def step(self, qn: RangeQuery) -> ExactStep:
        n = self.objects.n
        ids, d = self.searcher.within(qn.location.x, qn.location.y, qn.radius)
        ids, ranks = ranked(ids, d)
        entry = _Entry(qn, ids, n - ranks + 1)
        old = self.window.push(entry)
        self.scores[entry.ids] += entry.contrib
        opq = len(ids)
        if old is not None:
            self.scores[old.ids] -= old.contrib
            opq += len(old.ids)
        fill = len(self.window)
        top = top_m(self.scores, self.m)
        self.result = [(int(o), self.scores[o] / fill) for o in top]
        return ExactStep(self.result, opq, warmup=not self.window.full)

    def popularity(self, o: int) -> float:
        return self.scores[o] / max(len(self.window), 1)

    @property
    def queries(self) -> list[RangeQuery]:
        return [e.query for e in self.window]


def exact_scores(objects: ObjectSet, queries, searcher: RangeSearcher | None = None) -> np.ndarray:
    """From-scratch integer score sums for every object over ``queries``."""
    searcher = searcher or RangeSearcher(objects)
    n = objects.n
    scores = np.zeros(n, dtype=np.int64)
    for q in queries:
        ids, d = searcher.within(q.location.x, q.location.y, q.radius)
        ids, ranks = ranked(ids, d)
        scores[ids] += n - ranks + 1
    return scores
