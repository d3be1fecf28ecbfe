"""Spatial indexes (R-tree, KD-tree, quadtree/octree) with optional learned interpolation leaves."""

from .builders import BuildConfig, Family, IndexTree, build
from .geometry import MBR, RangeQuery, as_point, as_points
from .leaf_model import IFLeaf, LeafModel, SearchStrategy, build_leaf
from .query_engine import (QueryResult, QueryStats, point_query, point_query_many, range_query,
                           range_query_many)
from .workload import Dataset, Workload, load_dataset, make_dataset

__version__ = "0.1.0"

__all__ = [
    "BuildConfig", "Family", "IndexTree", "build", "MBR", "RangeQuery", "as_point", "as_points",
    "IFLeaf", "LeafModel", "SearchStrategy", "build_leaf", "QueryResult", "QueryStats",
    "point_query", "point_query_many", "range_query", "range_query_many", "Dataset", "Workload",
    "load_dataset", "make_dataset",
]
