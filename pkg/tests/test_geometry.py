import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srm.geometry import (Cell, ObjectSet, Point, dist, max_dist, max_dist_many, max_dist_rect,
                          min_dist, min_dist_many, min_dist_rect)

coord = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def cells(draw):
    x0, x1 = sorted((draw(coord), draw(coord)))
    y0, y1 = sorted((draw(coord), draw(coord)))
    return Cell(x0, y0, x1, y1)


def sq(a, b, c, d):
    return Cell(a, b, c, d)


@pytest.mark.parametrize("p, q, want", [
    ((0, 0), (3, 4), 5.0),
    ((1, 1), (1, 1), 0.0),
    ((0, 0), (1, 1), math.sqrt(2)),
])
def test_dist_examples(p, q, want):
    assert dist(Point(*p), Point(*q)) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("p, want", [((5, 5), 0.0), ((12, 5), 2.0), ((13, 14), 5.0)])
def test_min_dist_examples(p, want):
    assert min_dist(Point(*p), sq(0, 0, 10, 10)) == pytest.approx(want)


@pytest.mark.parametrize("p, c, want", [
    ((0, 0), (0, 0, 3, 4), 5.0),
    ((5, 5), (5, 5, 5, 5), 0.0),
    ((-1, 0), (0, 0, 1, 1), math.sqrt(5)),
])
def test_max_dist_examples(p, c, want):
    assert max_dist(Point(*p), sq(*c)) == pytest.approx(want)


def test_rect_distances_examples():
    unit = sq(0, 0, 1, 1)
    assert min_dist_rect(unit, sq(2, 0, 3, 1)) == 1.0
    assert min_dist_rect(unit, unit) == 0.0
    assert max_dist_rect(unit, sq(2, 2, 3, 3)) == pytest.approx(3 * math.sqrt(2))


def test_boundary_point_is_inside():
    assert min_dist(Point(10, 3), sq(0, 0, 10, 10)) == 0.0
    assert sq(0, 0, 10, 10).contains(Point(10, 10))


def test_invalid_values_rejected():
    with pytest.raises(ValueError):
        Point(float("nan"), 0)
    with pytest.raises(ValueError):
        Cell(1, 0, 0, 1)
    with pytest.raises(ValueError):
        ObjectSet(np.empty((0, 2)))
    with pytest.raises(ValueError):
        ObjectSet(np.array([[0.0, np.inf]]))


@given(coord, coord, cells(), st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=20))
def test_point_cell_bounds_bracket_every_inner_point(px, py, c, fracs):
    p = Point(px, py)
    lo, hi = min_dist(p, c), max_dist(p, c)
    for fx, fy in fracs:
        q = Point(c.xmin + fx * c.width, c.ymin + fy * c.height)
        d = dist(p, q)
        assert lo <= d * (1 + 1e-12) + 1e-12
        assert d <= hi * (1 + 1e-12) + 1e-12


@given(cells(), cells(), st.lists(st.tuples(*[st.floats(0, 1)] * 4), min_size=1, max_size=20))
def test_rect_bounds_bracket_sampled_pairs(a, b, fracs):
    lo, hi = min_dist_rect(a, b), max_dist_rect(a, b)
    for fx, fy, gx, gy in fracs:
        p = Point(a.xmin + fx * a.width, a.ymin + fy * a.height)
        q = Point(b.xmin + gx * b.width, b.ymin + gy * b.height)
        d = dist(p, q)
        assert lo <= d * (1 + 1e-12) + 1e-12
        assert d <= hi * (1 + 1e-12) + 1e-12


@given(cells(), cells())
def test_rect_distances_symmetric_and_zero_iff_intersecting(a, b):
    assert min_dist_rect(a, b) == min_dist_rect(b, a)
    assert max_dist_rect(a, b) == max_dist_rect(b, a)
    overlap = a.xmin <= b.xmax and b.xmin <= a.xmax and a.ymin <= b.ymax and b.ymin <= a.ymax
    assert (min_dist_rect(a, b) == 0.0) == overlap


@given(coord, coord, coord, coord)
def test_dist_symmetric(a, b, c, d):
    assert dist(Point(a, b), Point(c, d)) == dist(Point(c, d), Point(a, b))


def test_vectorised_forms_match_scalar(rng):
    xy = rng.normal(size=(200, 2)) * 5
    cell = sq(-1, -2, 3, 0.5)
    mind = min_dist_many(xy, cell.as_tuple())
    maxd = max_dist_many(xy, cell.as_tuple())
    for i, (x, y) in enumerate(xy):
        assert mind[i] == min_dist(Point(x, y), cell)
        assert maxd[i] == max_dist(Point(x, y), cell)
