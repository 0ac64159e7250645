import numpy as np
import pytest

from conftest import C1, brute_bounds, sample_in, true_ranks
from srm.geometry import Cell, ObjectSet, Point
from srm.partition import (OutOfBounds, PartitionConfig, Quadtree, RankBounds, build_quadtree,
                           locate_leaf, lower_rank_bound, needs_split, rank_bounds, root_cell,
                           upper_rank_bound)


def test_figure_bounds_for_o4(figure_objects):
    c1 = Cell(*C1)
    assert lower_rank_bound(3, c1, figure_objects) == 2
    assert upper_rank_bound(3, c1, figure_objects) == 4


def test_whole_dataspace_lower_bound_is_one(rng):
    objs = ObjectSet(rng.random((30, 2)))
    root = root_cell(objs)
    lower, _, _ = rank_bounds(objs, root)
    assert (lower == 1).all()


def test_singleton_bounds_are_one():
    objs = ObjectSet(np.array([[0.3, 0.7]]))
    assert lower_rank_bound(0, Cell(0, 0, 1, 1), objs) == 1
    assert upper_rank_bound(0, Cell(5, 5, 6, 6), objs) == 1


@pytest.mark.parametrize("seed", range(10))
def test_bounds_match_defining_counts(seed):
    rng = np.random.default_rng(seed)
    objs = ObjectSet(rng.random((20, 2)))
    x0, x1 = sorted(rng.random(2))
    y0, y1 = sorted(rng.random(2))
    lower, upper, _ = rank_bounds(objs, (x0, y0, x1, y1))
    want_lo, want_up = brute_bounds(objs.xy, (x0, y0, x1, y1))
    assert np.array_equal(lower, want_lo)
    assert np.array_equal(upper, want_up)


def test_large_set_uses_sorted_counts_identically(rng):
    objs = ObjectSet(rng.random((400, 2)))
    cell = (0.2, 0.3, 0.25, 0.31)
    lower, upper, _ = rank_bounds(objs, cell)
    want_lo, want_up = brute_bounds(objs.xy, cell)
    assert np.array_equal(lower, want_lo) and np.array_equal(upper, want_up)


def test_coincident_objects_clamp_and_flag():
    objs = ObjectSet(np.array([[0.5, 0.5], [0.5, 0.5], [0.9, 0.9]]))
    lower, upper, tied = rank_bounds(objs, (0.5, 0.5, 0.5, 0.5))
    assert (upper >= lower).all()
    assert tied[:2].all()


@pytest.mark.parametrize("lo, up, eps, want", [
    (10, 20, 0.5, True),
    (100, 120, 0.5, False),
    (7, 7, 0.0, False),
    (7, 7, 3.0, False),
])
def test_needs_split_examples(lo, up, eps, want):
    assert needs_split(RankBounds(lo, up), eps) is want


def test_single_object_root_never_splits():
    tree = build_quadtree(ObjectSet(np.array([[1.0, 2.0]])), PartitionConfig(epsilon=1))
    assert tree.root.is_leaf
    assert [leaf.key for leaf in tree.leaves()] == [(0, 0, 0)]


def test_coincident_pair_stops_at_depth_cap():
    objs = ObjectSet(np.array([[0.5, 0.5], [0.5, 0.5]]))
    tree = build_quadtree(objs, PartitionConfig(epsilon=0.5, max_depth=8))
    depths = [leaf.depth for leaf in tree.leaves()]
    assert max(depths) == 8
    assert any(leaf.capped for leaf in tree.leaves())


def test_uniform_leaves_pass_full_recheck(rng):
    objs = ObjectSet(rng.random((50, 2)))
    tree = build_quadtree(objs, PartitionConfig(epsilon=3))
    bad = [leaf for leaf in tree.leaves() if not leaf.capped and tree.check_leaf(leaf)]
    assert bad == []


def test_locate_center_goes_to_upper_right_quadrant():
    objs = ObjectSet(np.array([[0.0, 0.0], [0.1, 0.05], [1.0, 1.0], [0.95, 0.9]]))
    tree = build_quadtree(objs, PartitionConfig(epsilon=0, max_depth=1))
    assert not tree.root.is_leaf
    root = tree.root.as_cell()
    leaf = locate_leaf(tree, root.center)
    assert (leaf.xmin, leaf.ymin) == (root.center.x, root.center.y)


def test_unsplit_root_locates_to_root():
    tree = build_quadtree(ObjectSet(np.array([[1.0, 2.0]])), PartitionConfig())
    assert locate_leaf(tree, Point(1.0, 2.0)) == tree.root.as_cell()


def test_locate_outside_dataspace_raises(rng):
    tree = build_quadtree(ObjectSet(rng.random((10, 2))), PartitionConfig(), lazy=True)
    with pytest.raises(OutOfBounds):
        tree.locate(5.0, 5.0)


def test_degenerate_root_rejected():
    with pytest.raises(ValueError):
        Quadtree(ObjectSet(np.array([[0.0, 0.0]])), PartitionConfig(), Cell(0, 0, 0, 1))


def test_config_validation():
    for bad in (dict(epsilon=-1), dict(max_depth=0), dict(block_size=0)):
        with pytest.raises(ValueError):
            PartitionConfig(**bad)


def test_leaves_tile_root_and_points_land_in_one_leaf(rng):
    objs = ObjectSet(rng.random((40, 2)))
    tree = build_quadtree(objs, PartitionConfig(epsilon=3))
    leaves = list(tree.leaves())
    boxes = np.array([leaf.cell for leaf in leaves])
    root = tree.root.as_cell()
    area = sum((c[2] - c[0]) * (c[3] - c[1]) for c in (leaf.cell for leaf in leaves))
    assert area == pytest.approx(root.width * root.height, rel=1e-12)
    pts = sample_in(tree.root.cell, rng, 1000)
    for x, y in pts:
        inside = np.flatnonzero((boxes[:, 0] <= x) & (x <= boxes[:, 2])
                                & (boxes[:, 1] <= y) & (y <= boxes[:, 3]))
        assert len(inside) == 1
        assert tree.locate(x, y) is leaves[inside[0]]


def test_lazy_and_eager_trees_agree(rng):
    objs = ObjectSet(rng.random((60, 2)))
    cfg = PartitionConfig(epsilon=3)
    eager = [(n.key, n.cell) for n in build_quadtree(objs, cfg).leaves()]
    lazy = build_quadtree(objs, cfg, lazy=True)
    for x, y in sample_in(lazy.root.cell, rng, 50):
        lazy.locate(x, y)
    assert [(n.key, n.cell) for n in lazy.leaves()] == eager


@pytest.mark.parametrize("seed", range(5))
def test_bounds_bracket_true_rank_inside_leaf(seed):
    rng = np.random.default_rng(seed)
    objs = ObjectSet(rng.random((150, 2)))
    tree = build_quadtree(objs, PartitionConfig(epsilon=1), lazy=True)
    for qx, qy in sample_in(tree.root.cell, rng, 10):
        cell = tree.locate(qx, qy).cell
        lower, upper, _ = rank_bounds(objs, cell)
        for x, y in sample_in(cell, rng, 10):
            r = true_ranks(objs.xy, x, y)
            assert (lower <= r).all() and (r <= upper).all()


def test_bounds_tighten_in_sub_cells(rng):
    objs = ObjectSet(rng.random((100, 2)))
    parent = (0.2, 0.2, 0.6, 0.6)
    child = (0.2, 0.4, 0.4, 0.6)
    pl, pu, _ = rank_bounds(objs, parent)
    cl, cu, _ = rank_bounds(objs, child)
    assert (cl >= pl).all() and (cu <= pu).all()
