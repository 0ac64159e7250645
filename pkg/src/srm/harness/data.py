"""Object ingestion and seeded synthetic workloads."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from ..geometry import ObjectSet
from ..window import RangeQuery

GENERATORS = ("uniform", "skewed", "centroid")
DISTRIBUTIONS = ("uniform", "city")


class DataError(ValueError):
    """Malformed object or query file."""


def _read_rows(path, header: list[str]):
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip().lower() for h in first] != header:
            raise DataError(f"{path}:1: expected header {','.join(header)}, got {first}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def load_objects(path) -> ObjectSet:
    """Read an ``id,x,y`` CSV; ids must be unique and cover 0..N-1."""
    seen: dict[int, int] = {}
    coords: dict[int, tuple[float, float]] = {}
    for line, (sid, sx, sy) in _read_rows(path, ["id", "x", "y"]):
        try:
            oid = int(sid)
            x, y = float(sx), float(sy)
        except ValueError:
            raise DataError(f"{path}:{line}: cannot parse {sid!r},{sx!r},{sy!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataError(f"{path}:{line}: non-finite coordinate")
        if oid in seen:
            raise DataError(f"{path}:{line}: duplicate id {oid} (first on line {seen[oid]})")
        seen[oid] = line
        coords[oid] = (x, y)
    n = len(coords)
    if n == 0:
        raise DataError(f"{path}: no objects")
    missing = set(range(n)) - coords.keys()
    if missing:
        raise DataError(f"{path}: ids must be 0..{n - 1}; missing {sorted(missing)[:5]}")
    return ObjectSet(np.array([coords[i] for i in range(n)], dtype=np.float64))


def save_objects(objects: ObjectSet, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"])
        for i, (x, y) in enumerate(objects.xy.tolist()):
            w.writerow([i, repr(x), repr(y)])


def load_queries(path) -> list[RangeQuery]:
    """Read an ``x,y,radius,seq`` CSV, returned in ``seq`` order."""
    out = []
    for line, (sx, sy, sr, ss) in _read_rows(path, ["x", "y", "radius", "seq"]):
        try:
            out.append(RangeQuery.at(float(sx), float(sy), float(sr), int(ss)))
        except ValueError as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
    out.sort(key=lambda q: q.sequence_no)
    return out


def synthetic_objects(n: int, distribution: str = "city", seed: int = 0) -> ObjectSet:
    """``n`` points in the unit square.

    ``city`` puts 60% of the points in Gaussian neighbourhoods around a few
    centres (a dense core plus suburbs) and scatters the rest uniformly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if distribution == "uniform":
        xy = rng.random((n, 2))
    elif distribution == "city":
        k = int(n * 0.6)
        centres = 0.2 + 0.6 * rng.random((20, 2))
        spread = rng.uniform(0.01, 0.05, 20)
        pick = rng.integers(0, 20, k)
        clustered = centres[pick] + rng.normal(size=(k, 2)) * spread[pick, None]
        xy = np.vstack([clustered, rng.random((n - k, 2))]).clip(0.0, 1.0)
        xy = xy[rng.permutation(n)]
    else:
        raise ValueError(f"unknown distribution {distribution!r}; choose from {DISTRIBUTIONS}")
    return ObjectSet(xy)


@dataclass(frozen=True)
class QueryGenerator:
    """Infinite seeded stream of range queries over an object set.

    uniform
        anchors (facility-like points drawn near objects) sampled uniformly
        with replacement; radius ``radius_pct`` of the dataspace diagonal.
    skewed
        the same anchors sampled with Zipf weights ``1/rank**zipf_s``.
    centroid
        synthetic users, each a cluster of check-ins; a query sits at the
        cluster centroid with a radius covering the cluster.  Single check-in
        users borrow the radius of another user.
    """

    objects: ObjectSet
    generator: str = "uniform"
    radius_pct: float = 4.0
    seed: int = 0
    anchors: int = 987
    zipf_s: float = 1.0
    users: int = 2000

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; choose from {GENERATORS}")
        if not 0 < self.radius_pct <= 100:
            raise ValueError("radius_pct must be in (0, 100]")

    @property
    def diagonal(self) -> float:
        lo = self.objects.xy.min(axis=0)
        hi = self.objects.xy.max(axis=0)
        d = float(np.hypot(*(hi - lo)))
        return d if d > 0 else 1.0

    def _anchor_points(self, rng) -> np.ndarray:
        xy = self.objects.xy
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        pts = xy[rng.integers(0, len(xy), self.anchors)]
        jitter = rng.normal(scale=0.005 * self.diagonal, size=pts.shape)
        return np.clip(pts + jitter, lo, hi)

    def _users(self, rng) -> tuple[np.ndarray, np.ndarray]:
        xy = self.objects.xy
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        homes = xy[rng.integers(0, len(xy), self.users)]
        sizes = rng.geometric(0.3, self.users)
        centres = np.empty((self.users, 2))
        radii = np.zeros(self.users)
        for u in range(self.users):
            pts = np.clip(homes[u] + rng.normal(scale=0.02 * self.diagonal, size=(sizes[u], 2)), lo, hi)
            centres[u] = pts.mean(axis=0)
            radii[u] = np.sqrt(((pts - centres[u]) ** 2).sum(axis=1)).max()
        multi = np.flatnonzero(radii > 0)
        for u in np.flatnonzero(radii == 0):
            radii[u] = radii[rng.choice(multi)] if len(multi) else self.radius_pct / 100 * self.diagonal
        return centres, radii

    def __iter__(self) -> Iterator[RangeQuery]:
        rng = np.random.default_rng(self.seed)
        seq = 0
        if self.generator == "centroid":
            centres, radii = self._users(rng)
            while True:
                for u in rng.integers(0, len(centres), 4096):
                    yield RangeQuery.at(centres[u, 0], centres[u, 1], radii[u], seq)
                    seq += 1
        pts = self._anchor_points(rng)
        radius = self.radius_pct / 100 * self.diagonal
        if self.generator == "uniform":
            p = None
        else:
            w = 1.0 / np.arange(1, len(pts) + 1) ** self.zipf_s
            p = w / w.sum()
        while True:
            for a in rng.choice(len(pts), size=4096, p=p):
                yield RangeQuery.at(pts[a, 0], pts[a, 1], radius, seq)
                seq += 1

    def take(self, k: int) -> list[RangeQuery]:
        out = []
        for q in self:
            if len(out) == k:
                break
            out.append(q)
        return out
