"""Interpolation-friendly leaves.

An IF leaf stores its records sorted on the single dimension whose values
are best predicted by linear interpolation between the leaf's minimum and
maximum. The header holds the fitted slope/base plus the maximum and mean
position error, so a lookup is one multiply-add followed by a short local
search.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .geometry import MBR, as_point, as_points


class SearchStrategy(enum.IntEnum):
    """Local search used around the predicted position."""

    BINARY = K.BINARY  # bounded by the max error
    LINEAR = K.LINEAR
    EXPONENTIAL = K.EXPONENTIAL

    @classmethod
    def parse(cls, value) -> "SearchStrategy":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(value)


@dataclass(frozen=True)
class LeafModel:
    slope: float
    base: float

    # the position formula names these A and B
    @property
    def A(self) -> float:
        return self.slope

    @property
    def B(self) -> float:
        return self.base


@dataclass(frozen=True)
class ErrorStats:
    max_err: int
    mean_err: float


@dataclass(frozen=True)
class IFLeaf:
    """A built leaf: header fields plus records sorted on ``pdim``."""

    pdim: int
    sdim: int
    model: LeafModel
    stats: ErrorStats
    records: np.ndarray
    payload: np.ndarray

    @property
    def K(self) -> int:
        return self.records.shape[0]

    @property
    def d(self) -> int:
        return self.records.shape[1]

    def key_values(self) -> np.ndarray:
        return self.records[:, self.pdim]

    def predict(self, v: float) -> int:
        return predict(self.model, v, self.K)

    def _kernel_leaves(self):
        start = np.array([0, self.K], dtype=np.int64)
        return (
            self.records, self.payload, start,
            np.array([self.pdim]), np.array([self.sdim]),
            np.array([self.model.slope]), np.array([self.model.base]),
            np.array([self.stats.max_err]), True,
        )


def fit_linear(values) -> LeafModel:
    """Two-point interpolation from (min value, position 0) to (max value, position K-1)."""
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if vals.size == 0:
        raise ValueError("cannot fit a model on an empty leaf")
    if np.any(np.diff(vals) < 0):
        raise ValueError("values must be sorted ascending")
    slope, base = K.fit_sorted(vals)
    return LeafModel(float(slope), float(base))


def predict(model: LeafModel, v: float, k: int) -> int:
    if k < 1:
        raise ValueError("leaf must hold at least one record")
    return int(K.predict_pos(float(model.slope), float(model.base), float(v), int(k)))


def eval_errors(model: LeafModel, values) -> ErrorStats:
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if vals.size == 0:
        raise ValueError("cannot evaluate a model on an empty leaf")
    mx, mn = K.errors_sorted(vals, float(model.slope), float(model.base))
    return ErrorStats(int(mx), float(mn))


def choose_storage_dim(points, strategy=SearchStrategy.BINARY) -> tuple[int, list[ErrorStats]]:
    """Pick the dimension with the smallest model error.

    Max error decides under binary search, mean error under linear or
    exponential search; ties go to the lowest dimension index.
    """
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise ValueError("cannot choose a storage order for an empty leaf")
    strategy = SearchStrategy.parse(strategy)
    _, _, maxe, meane = K.dim_profile(pts)
    per_dim = [ErrorStats(int(a), float(b)) for a, b in zip(maxe, meane)]
    return int(K.pick_dim(maxe, meane, int(strategy))), per_dim


def build_leaf(points, payload=None, strategy=SearchStrategy.BINARY) -> IFLeaf:
    pts = as_points(points).copy()
    if pts.shape[0] == 0:
        raise ValueError("cannot build an empty leaf")
    if payload is None:
        payload = np.arange(pts.shape[0], dtype=np.int64)
    ids = np.array(payload, dtype=np.int64).reshape(-1)
    if ids.shape[0] != pts.shape[0]:
        raise ValueError("payload length does not match the number of points")
    strategy = SearchStrategy.parse(strategy)
    start = np.array([0, pts.shape[0]], dtype=np.int64)
    pdim, sdim, slope, base, max_err, mean_err = K.build_if_leaves(pts, ids, start, int(strategy))
    return IFLeaf(
        pdim=int(pdim[0]),
        sdim=int(sdim[0]),
        model=LeafModel(float(slope[0]), float(base[0])),
        stats=ErrorStats(int(max_err[0]), float(mean_err[0])),
        records=pts,
        payload=ids,
    )


def leaf_find_first(leaf: IFLeaf, v: float, strategy=SearchStrategy.BINARY,
                    range_mode: bool = False, stats: np.ndarray | None = None) -> int | None:
    """Smallest index whose key equals ``v`` (or is >= ``v`` with ``range_mode``).

    Returns ``None`` when no such record exists.
    """
    strategy = SearchStrategy.parse(strategy)
    v32 = np.float32(v)
    i = int(K.leaf_lower_bound(leaf.records, 0, leaf.K, leaf.pdim, leaf.model.slope,
                               leaf.model.base, leaf.stats.max_err, v32, int(strategy), stats))
    if i == leaf.K:
        return None
    if not range_mode and leaf.records[i, leaf.pdim] != v32:
        return None
    return i


def leaf_point_query(leaf: IFLeaf, q, strategy=SearchStrategy.BINARY,
                     stats: np.ndarray | None = None) -> set[int]:
    q = as_point(q, leaf.d)
    out = np.empty(leaf.K, dtype=np.int64)  # a leaf cannot match more than K records
    acc = np.zeros(2, dtype=np.int64)
    n = K.leaf_point(leaf._kernel_leaves(), 0, q, int(SearchStrategy.parse(strategy)),
                     out, 0, acc, True, stats)
    return set(out[:n].tolist())


def leaf_range_query(leaf: IFLeaf, q: MBR, strategy=SearchStrategy.BINARY,
                     stats: np.ndarray | None = None) -> set[int]:
    if q.d != leaf.d:
        raise ValueError(f"dimensionality mismatch: {q.d} vs {leaf.d}")
    out = np.empty(leaf.K, dtype=np.int64)
    acc = np.zeros(2, dtype=np.int64)
    n = K.leaf_range(leaf._kernel_leaves(), 0, q.lo, q.hi, int(SearchStrategy.parse(strategy)),
                     out, 0, acc, True, stats)
    return set(out[:n].tolist())


def check_leaf(leaf: IFLeaf) -> None:
    """Assert every structural invariant of a built leaf; raises AssertionError."""
    keys = leaf.key_values()
    assert np.all(np.diff(keys) >= 0), "records not sorted on pdim"
    order = [leaf.pdim] + [k for k in range(leaf.d) if k != leaf.pdim]
    rows = [tuple(r[order]) for r in leaf.records]
    assert rows == sorted(rows), "records not lexicographically ordered"
    assert 0 <= leaf.pdim < leaf.d and 0 <= leaf.sdim < leaf.d
    if leaf.d > 1:
        assert leaf.sdim != leaf.pdim
    assert leaf.model.slope >= 0
    for i, v in enumerate(keys):
        assert abs(leaf.predict(v) - i) <= leaf.stats.max_err, f"error bound violated at {i}"
    assert leaf.stats.mean_err <= leaf.stats.max_err
