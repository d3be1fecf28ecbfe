"""Bulk construction of the plain and IF variants of each index family.

Partitioning is identical for both variants of a family; the ``learned``
flag only decides what happens to each leaf's records afterwards (left in
partition order, or sorted on the most predictable dimension with a model
header).

Internal nodes live in per-family arenas of flat arrays:

* R-tree: ``node_start`` (entry offsets per node), ``entry_lo``/``entry_hi``
  (child MBRs) and ``entry_child``; nodes are stored level by level, root last.
* KD-tree: ``split_dim``, ``split_val``, ``left``, ``right``.
* Quad/Octree: ``region_lo``, ``region_hi`` and a ``children`` table with
  2^d slots per node (``ABSENT`` when an orthant is empty).
"""

from __future__ import annotations

import enum
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .geometry import MBR, SUPPORTED_DIMS, as_points, mbr_contains_mbr
from .leaf_model import ErrorStats, IFLeaf, LeafModel, SearchStrategy

ABSENT = K.ABSENT

IF_LEAF_HEADER = np.dtype([
    ("count", "<u4"),
    ("pdim", "u1"),
    ("sdim", "u1"),
    ("pad", "<u2"),
    ("slope", "<f8"),
    ("base", "<f8"),
    ("max_err", "<u4"),
    ("mean_err", "<f4"),
])
PLAIN_LEAF_HEADER = np.dtype([("count", "<u4")])


class Family(str, enum.Enum):
    RTREE = "rtree"
    KDTREE = "kdtree"
    QUADTREE_OCTREE = "quadtree"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("-", "").replace("_", "")
        aliases = {"rtree": cls.RTREE, "kdtree": cls.KDTREE, "kd": cls.KDTREE,
                   "quadtree": cls.QUADTREE_OCTREE, "octree": cls.QUADTREE_OCTREE,
                   "quad": cls.QUADTREE_OCTREE, "quadtreeoctree": cls.QUADTREE_OCTREE}
        try:
            return aliases[v]
        except KeyError:
            raise ValueError(f"unknown index family {value!r}") from None


@dataclass(frozen=True)
class BuildConfig:
    family: Family = Family.RTREE
    learned: bool = False
    leaf_capacity: int = 16
    internal_fanout: int | None = None  # R-tree only; defaults to leaf_capacity
    strategy: SearchStrategy = SearchStrategy.BINARY
    max_depth: int = 32  # Quad/Octree only
    workers: int = 1  # threads for per-leaf construction

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "strategy", SearchStrategy.parse(self.strategy))
        if self.leaf_capacity < 1:
            raise ValueError("leaf_capacity must be positive")
        if self.internal_fanout is not None and self.internal_fanout < 2:
            raise ValueError("internal_fanout must be at least 2")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    @property
    def fanout(self) -> int:
        return max(2, self.internal_fanout or self.leaf_capacity)

    def label(self) -> str:
        name = {"rtree": "RTree", "kdtree": "KDTree", "quadtree": "QuadTree"}[self.family.value]
        return ("IF-" if self.learned else "") + name


@dataclass
class LeafStore:
    """Records of every leaf in one array; leaf ``j`` is rows ``start[j]:start[j+1]``."""

    points: np.ndarray
    ids: np.ndarray
    start: np.ndarray
    learned: bool
    pdim: np.ndarray
    sdim: np.ndarray
    slope: np.ndarray
    base: np.ndarray
    max_err: np.ndarray
    mean_err: np.ndarray

    @property
    def count(self) -> int:
        return self.start.shape[0] - 1

    def sizes(self) -> np.ndarray:
        return np.diff(self.start)

    def kernel_tuple(self):
        return (self.points, self.ids, self.start, self.pdim, self.sdim,
                self.slope, self.base, self.max_err, self.learned)

    def header_bytes(self) -> int:
        dt = IF_LEAF_HEADER if self.learned else PLAIN_LEAF_HEADER
        return self.count * dt.itemsize


@dataclass(frozen=True)
class PlainLeaf:
    records: np.ndarray
    payload: np.ndarray


@dataclass
class IndexTree:
    """An immutable built index: one family arena plus the shared leaf store."""

    config: BuildConfig
    d: int
    root: int
    arena: dict
    leaves: LeafStore
    bounds: MBR
    timings: dict = field(default_factory=dict)
    levels: int = 0  # internal levels on the longest root-to-leaf path

    @property
    def family(self) -> Family:
        return self.config.family

    @property
    def learned(self) -> bool:
        return self.config.learned

    @property
    def n(self) -> int:
        return self.leaves.points.shape[0]

    @property
    def build_ms(self) -> float:
        return self.timings.get("total_ms", 0.0)

    def kernel_nodes(self):
        a = self.arena
        blo, bhi = self.bounds.lo, self.bounds.hi
        if self.family is Family.RTREE:
            return (a["node_start"], a["entry_lo"], a["entry_hi"], a["entry_child"], blo, bhi)
        if self.family is Family.KDTREE:
            return (a["split_dim"], a["split_val"], a["left"], a["right"], blo, bhi)
        return (a["region_lo"], a["region_hi"], a["children"], blo, bhi)

    def internal_bytes(self) -> int:
        return int(sum(arr.nbytes for arr in self.arena.values()))

    def leaf(self, j: int) -> IFLeaf | PlainLeaf:
        ls = self.leaves
        s, e = ls.start[j], ls.start[j + 1]
        if not ls.learned:
            return PlainLeaf(ls.points[s:e], ls.ids[s:e])
        return IFLeaf(
            pdim=int(ls.pdim[j]), sdim=int(ls.sdim[j]),
            model=LeafModel(float(ls.slope[j]), float(ls.base[j])),
            stats=ErrorStats(int(ls.max_err[j]), float(ls.mean_err[j])),
            records=ls.points[s:e], payload=ls.ids[s:e],
        )

    def iter_leaves(self):
        for j in range(self.leaves.count):
            yield self.leaf(j)

    @property
    def internal_node_count(self) -> int:
        a = self.arena
        if self.family is Family.RTREE:
            return max(0, a["node_start"].shape[0] - 1)
        if self.family is Family.KDTREE:
            return a["split_dim"].shape[0]
        return a["children"].shape[0]

    def depth(self) -> int:
        return self.levels

    def stack_bound(self) -> int:
        """Upper bound on the traversal stack of any query against this tree."""
        if self.family is Family.RTREE:
            widest = int(np.diff(self.arena["node_start"]).max(initial=1))
        elif self.family is Family.KDTREE:
            widest = 2
        else:
            widest = 1 << self.d
        return widest * (self.levels + 1) + 1


# ---------------------------------------------------------------------------
# leaf construction hook
# ---------------------------------------------------------------------------

def _make_leaves(pts: np.ndarray, ids: np.ndarray, start: np.ndarray, cfg: BuildConfig) -> LeafStore:
    nleaf = start.shape[0] - 1
    if not cfg.learned:
        z = np.zeros(nleaf, dtype=np.int64)
        zf = np.zeros(nleaf)
        return LeafStore(pts, ids, start, False, z, z, zf, zf, z, zf)
    if cfg.workers > 1 and nleaf > 1:
        parts = _build_leaves_parallel(pts, ids, start, int(cfg.strategy), cfg.workers)
    else:
        parts = K.build_if_leaves(pts, ids, start, int(cfg.strategy))
    pdim, sdim, slope, base, max_err, mean_err = parts
    return LeafStore(pts, ids, start, True, pdim, sdim, slope, base, max_err, mean_err)


def _build_leaves_parallel(pts, ids, start, strategy, workers):
    nleaf = start.shape[0] - 1
    bounds = np.linspace(0, nleaf, min(workers, nleaf) + 1).astype(np.int64)

    def run(chunk):
        j0, j1 = bounds[chunk], bounds[chunk + 1]
        s0, s1 = start[j0], start[j1]
        return K.build_if_leaves(pts[s0:s1], ids[s0:s1], start[j0:j1 + 1] - s0, strategy)

    with ThreadPoolExecutor(max_workers=workers) as ex:
        results = list(ex.map(run, range(len(bounds) - 1)))
    return tuple(np.concatenate([r[i] for r in results]) for i in range(6))


# ---------------------------------------------------------------------------
# R-tree (Sort-Tile-Recursive)
# ---------------------------------------------------------------------------

def _slab_count(p: int, d: int) -> int:
    s = max(1, int(round(p ** (1.0 / d))))
    while s ** d < p:
        s += 1
    while s > 1 and (s - 1) ** d >= p:
        s -= 1
    return s


def str_order(centers: np.ndarray, cap: int) -> np.ndarray:
    """STR ordering: consecutive runs of ``cap`` in the result form one tile.

    Sorts on dimension 0 into vertical slabs of ``cap * S^(d-1)`` entries,
    then each slab on dimension 1 into runs of ``cap * S^(d-2)``, and so on.
    """
    n, d = centers.shape
    p = math.ceil(n / cap)
    s = _slab_count(p, d)
    order = np.arange(n)
    groups = np.zeros(n, dtype=np.int64)
    for k in range(d):
        o = np.lexsort((centers[order, k], groups))
        order = order[o]
        groups = np.arange(n) // (cap * s ** (d - 1 - k))
    return order


def str_bulkload(points, ids=None, cfg: BuildConfig | None = None) -> IndexTree:
    cfg = cfg or BuildConfig(Family.RTREE)
    if cfg.family is not Family.RTREE:
        cfg = replace(cfg, family=Family.RTREE)
    pts, ids = _prepare(points, ids)
    t0 = time.perf_counter()
    n, d = pts.shape
    cap = cfg.leaf_capacity
    perm = str_order(pts.astype(np.float64), cap)
    pts = np.ascontiguousarray(pts[perm])
    ids = ids[perm].copy()
    start = np.minimum(np.arange(0, n + cap, cap, dtype=np.int64), n)
    start = np.unique(start)
    t1 = time.perf_counter()
    leaves = _make_leaves(pts, ids, start, cfg)
    t2 = time.perf_counter()

    lo, hi = K.segment_envelopes(leaves.points, leaves.start)
    refs = -np.arange(leaves.count, dtype=np.int64) - 1
    fanout = cfg.fanout
    node_start = [0]
    e_lo, e_hi, e_child = [], [], []
    n_entries = 0
    n_nodes = 0
    while refs.shape[0] > 1:
        centers = 0.5 * (lo.astype(np.float64) + hi.astype(np.float64))
        order = str_order(centers, fanout)
        lo, hi, refs = lo[order], hi[order], refs[order]
        m = refs.shape[0]
        e_lo.append(lo)
        e_hi.append(hi)
        e_child.append(refs)
        group_start = np.arange(0, m, fanout, dtype=np.int64)
        node_start.extend((n_entries + np.append(group_start[1:], m)).tolist())
        n_entries += m
        parent_ids = n_nodes + np.arange(group_start.shape[0], dtype=np.int64)
        n_nodes += group_start.shape[0]
        lo = np.minimum.reduceat(lo, group_start, axis=0)
        hi = np.maximum.reduceat(hi, group_start, axis=0)
        refs = parent_ids
    root = int(refs[0])
    arena = {
        "node_start": np.array(node_start if e_lo else [], dtype=np.int64),
        "entry_lo": np.ascontiguousarray(np.concatenate(e_lo)) if e_lo else np.empty((0, d), np.float32),
        "entry_hi": np.ascontiguousarray(np.concatenate(e_hi)) if e_hi else np.empty((0, d), np.float32),
        "entry_child": np.concatenate(e_child) if e_child else np.empty(0, np.int64),
    }
    t3 = time.perf_counter()
    return IndexTree(cfg, d, root, arena, leaves, _bounds(pts),
                     _timings(t0, t1, t2, t3), len(e_lo))


# ---------------------------------------------------------------------------
# KD-tree
# ---------------------------------------------------------------------------

def kd_build(points, ids=None, cfg: BuildConfig | None = None) -> IndexTree:
    """Median splits cycling through the dimensions; ties go to the left child.

    When the lower median equals a run's maximum the split moves to the
    largest value below it; a dimension that is constant over the run is
    skipped, and a run that is constant in every dimension becomes a leaf
    regardless of capacity.
    """
    cfg = cfg or BuildConfig(Family.KDTREE)
    if cfg.family is not Family.KDTREE:
        cfg = replace(cfg, family=Family.KDTREE)
    pts, ids = _prepare(points, ids)
    t0 = time.perf_counter()
    perm, start, split_dim, split_val, left, right, root, levels = K.kd_partition(pts, cfg.leaf_capacity)
    pts = np.ascontiguousarray(pts[perm])
    ids = ids[perm].copy()
    t1 = time.perf_counter()
    leaves = _make_leaves(pts, ids, start, cfg)
    t2 = time.perf_counter()
    arena = {"split_dim": split_dim, "split_val": split_val, "left": left, "right": right}
    return IndexTree(cfg, pts.shape[1], int(root), arena, leaves, _bounds(pts),
                     _timings(t0, t1, t2, t2), int(levels))


# ---------------------------------------------------------------------------
# Quadtree / Octree
# ---------------------------------------------------------------------------

def quad_build(points, ids=None, cfg: BuildConfig | None = None,
               region: MBR | None = None) -> IndexTree:
    """Midpoint splits into 2^d orthants; a coordinate equal to the midpoint goes low.

    The root region defaults to the data envelope; ``region`` fixes it
    explicitly (it must contain every point).
    """
    cfg = cfg or BuildConfig(Family.QUADTREE_OCTREE)
    if cfg.family is not Family.QUADTREE_OCTREE:
        cfg = replace(cfg, family=Family.QUADTREE_OCTREE)
    pts, ids = _prepare(points, ids)
    d = pts.shape[1]
    if d not in SUPPORTED_DIMS:
        raise ValueError(f"quadtree/octree requires d in {SUPPORTED_DIMS}, got {d}")
    t0 = time.perf_counter()
    bounds = _bounds(pts)
    if region is None:
        region = bounds
    elif region.d != d or not mbr_contains_mbr(region, bounds):
        raise ValueError("quadtree root region must contain every point")
    perm, start, region_lo, region_hi, children, root, levels = K.quad_partition(
        pts, cfg.leaf_capacity, cfg.max_depth,
        region.lo.astype(np.float64), region.hi.astype(np.float64))
    pts = np.ascontiguousarray(pts[perm])
    ids = ids[perm].copy()
    t1 = time.perf_counter()
    leaves = _make_leaves(pts, ids, start, cfg)
    t2 = time.perf_counter()
    arena = {"region_lo": region_lo, "region_hi": region_hi, "children": children}
    return IndexTree(cfg, d, int(root), arena, leaves, bounds, _timings(t0, t1, t2, t2), int(levels))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_BUILDERS = {
    Family.RTREE: str_bulkload,
    Family.KDTREE: kd_build,
    Family.QUADTREE_OCTREE: quad_build,
}


def build(points, ids=None, cfg: BuildConfig | None = None, **kwargs) -> IndexTree:
    """Build any of the eight variants; ``kwargs`` override fields of ``cfg``."""
    cfg = cfg or BuildConfig()
    if kwargs:
        cfg = replace(cfg, **kwargs)
    return _BUILDERS[cfg.family](points, ids, cfg)


def _prepare(points, ids):
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise ValueError("cannot build an index over an empty point set")
    if ids is None:
        ids = np.arange(pts.shape[0], dtype=np.int64)
    else:
        ids = np.array(ids, dtype=np.int64).reshape(-1)
        if ids.shape[0] != pts.shape[0]:
            raise ValueError("ids length does not match the number of points")
    return pts.copy(), ids


def _bounds(pts: np.ndarray) -> MBR:
    return MBR(pts.min(axis=0), pts.max(axis=0))


def _timings(t0, t1, t2, t3) -> dict:
    return {
        "partition_ms": (t1 - t0) * 1e3 + (t3 - t2) * 1e3,
        "leaf_ms": (t2 - t1) * 1e3,
        "total_ms": (t3 - t0) * 1e3,
    }
