"""Shared fixtures and brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest

from srm.geometry import ObjectSet, dist_many, max_dist_many, min_dist_many


def true_ranks(xy: np.ndarray, x: float, y: float) -> np.ndarray:
    """Rank of every object among all objects for a query at (x, y), ties by id."""
    d = dist_many(xy, x, y)
    order = np.lexsort((np.arange(len(xy)), d))
    ranks = np.empty(len(xy), dtype=np.int64)
    ranks[order] = np.arange(1, len(xy) + 1)
    return ranks


def brute_bounds(xy: np.ndarray, cell) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper rank bounds from the defining counts, O(N^2)."""
    mind = min_dist_many(xy, cell)
    maxd = max_dist_many(xy, cell)
    n = len(xy)
    lower = np.empty(n, dtype=np.int64)
    upper = np.empty(n, dtype=np.int64)
    for o in range(n):
        others = np.arange(n) != o
        lower[o] = 1 + np.count_nonzero(maxd[others] <= mind[o])
        upper[o] = 1 + np.count_nonzero(mind[others] < maxd[o])
    return lower, np.maximum(upper, lower)


def sample_in(cell, rng, k: int) -> np.ndarray:
    x0, y0, x1, y1 = cell
    return np.column_stack([rng.uniform(x0, x1, k), rng.uniform(y0, y1, k)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def figure_objects() -> ObjectSet:
    """Eight objects around the unit cell ``c1``.

    Only o1 is surely closer to every query in c1 than o4; o1, o2 and o3 may
    be closer; o5..o8 never are.  Ids are zero-based (o1 is id 0).
    """
    return ObjectSet(np.array([
        (0.5, 0.5),   # o1, inside c1
        (2.5, 0.5),   # o2
        (0.5, 3.0),   # o3
        (3.0, 0.5),   # o4
        (5.0, 0.5),   # o5
        (0.5, 5.0),   # o6
        (5.0, 5.0),   # o7
        (6.0, 6.0),   # o8
    ]))


C1 = (0.0, 0.0, 1.0, 1.0)


# -- acceptance report ----------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def report(number: int, ok: bool, title: str, detail: str) -> bool:
    ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
