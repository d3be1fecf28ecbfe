"""Point and range queries over built indexes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .builders import IndexTree
from .geometry import MBR, as_point, as_points
from .leaf_model import SearchStrategy


@dataclass
class QueryStats:
    nodes_visited: int = 0
    leaves_visited: int = 0
    records_compared: int = 0

    @classmethod
    def from_array(cls, a: np.ndarray) -> "QueryStats":
        return cls(int(a[K.NODES]), int(a[K.LEAVES]), int(a[K.COMPARED]))


@dataclass
class QueryResult:
    ids: set
    stats: QueryStats = field(default_factory=QueryStats)

    def __len__(self):
        return len(self.ids)


def _strategy(tree: IndexTree, strategy) -> int:
    return int(SearchStrategy.parse(strategy if strategy is not None else tree.config.strategy))


def point_query(tree: IndexTree, q, strategy=None) -> QueryResult:
    """All stored records whose coordinates equal ``q`` exactly."""
    q = as_point(q, tree.d)
    offsets, ids, stats = point_query_many(tree, q.reshape(1, -1), strategy, with_stats=True)
    return QueryResult(set(ids.tolist()), QueryStats.from_array(stats))


def range_query(tree: IndexTree, q: MBR, strategy=None) -> QueryResult:
    """All stored records inside the closed box ``q``."""
    if q.d != tree.d:
        raise ValueError(f"dimensionality mismatch: query {q.d}, index {tree.d}")
    offsets, ids, stats = range_query_many(tree, q.lo.reshape(1, -1), q.hi.reshape(1, -1),
                                           strategy, with_stats=True)
    return QueryResult(set(ids.tolist()), QueryStats.from_array(stats))


def point_query_many(tree: IndexTree, queries, strategy=None, with_stats: bool = False):
    """Batch point queries; returns ``(offsets, ids, stats)`` in CSR form.

    Matches for query ``i`` are ``ids[offsets[i]:offsets[i+1]]``.
    """
    qs = as_points(queries, tree.d)
    acc = np.zeros((qs.shape[0], 2), dtype=np.int64)
    stats = np.zeros(3, dtype=np.int64) if with_stats else None
    fn = K.POINT_MANY[tree.family.value]
    offsets, ids = fn(tree.kernel_nodes(), tree.root, tree.leaves.kernel_tuple(), qs,
                      _strategy(tree, strategy), acc, stats, True, tree.stack_bound())
    return offsets, ids, stats


def range_query_many(tree: IndexTree, lo, hi, strategy=None, with_stats: bool = False):
    qlo = as_points(lo, tree.d)
    qhi = as_points(hi, tree.d)
    if qlo.shape != qhi.shape:
        raise ValueError("lower and upper corner arrays differ in shape")
    acc = np.zeros((qlo.shape[0], 2), dtype=np.int64)
    stats = np.zeros(3, dtype=np.int64) if with_stats else None
    fn = K.RANGE_MANY[tree.family.value]
    offsets, ids = fn(tree.kernel_nodes(), tree.root, tree.leaves.kernel_tuple(), qlo, qhi,
                      _strategy(tree, strategy), acc, stats, True, tree.stack_bound())
    return offsets, ids, stats


def point_digest(tree: IndexTree, queries, strategy=None) -> np.ndarray:
    """Per-query ``(count, checksum)`` without materializing ids; the timed path."""
    acc = np.zeros((queries.shape[0], 2), dtype=np.int64)
    K.POINT_MANY[tree.family.value](tree.kernel_nodes(), tree.root, tree.leaves.kernel_tuple(),
                                    queries, _strategy(tree, strategy), acc, None, False,
                                    tree.stack_bound())
    return acc


def range_digest(tree: IndexTree, lo, hi, strategy=None) -> np.ndarray:
    acc = np.zeros((lo.shape[0], 2), dtype=np.int64)
    K.RANGE_MANY[tree.family.value](tree.kernel_nodes(), tree.root, tree.leaves.kernel_tuple(),
                                    lo, hi, _strategy(tree, strategy), acc, None, False,
                                    tree.stack_bound())
    return acc


def split_csr(offsets: np.ndarray, ids: np.ndarray) -> list[set]:
    return [set(ids[offsets[i]:offsets[i + 1]].tolist()) for i in range(offsets.shape[0] - 1)]
