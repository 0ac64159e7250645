"""Continuous top-m spatial popularity over a sliding window of range queries."""

from .geometry import Cell, ObjectSet, Point, dist, max_dist, max_dist_rect, min_dist, min_dist_rect
from .partition import PartitionConfig, RankBounds, build_quadtree, locate_leaf
from .irf import IrfIndex, RankList, build_index, block_upper_rank, locate_object
from .window import RangeQuery, SlidingWindow
from .exact import ExactEngine
from .approx import ApproxEngine

__all__ = [
    "Cell", "ObjectSet", "Point", "dist", "min_dist", "max_dist", "min_dist_rect", "max_dist_rect",
    "PartitionConfig", "RankBounds", "build_quadtree", "locate_leaf",
    "IrfIndex", "RankList", "build_index", "block_upper_rank", "locate_object",
    "RangeQuery", "SlidingWindow", "ExactEngine", "ApproxEngine",
]
