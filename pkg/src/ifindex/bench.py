"""Measurement harness: footprint, build time, lookup latency, throughput, sweeps.

Timing is batch based: each pass runs the whole query batch through one
compiled loop with statistics counters compiled out. Latency percentiles are
taken over equal-size sub-batches of an extra pass, so they describe
per-query cost averaged over a sub-batch rather than individual queries.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .builders import (IF_LEAF_HEADER, PLAIN_LEAF_HEADER, BuildConfig, Family, IndexTree,
                       LeafStore, build)
from .geometry import MBR
from .leaf_model import SearchStrategy
from .query_engine import point_digest, point_query_many, range_digest, range_query_many
from .workload import Dataset, Workload, WorkloadKind

DEFAULT_CAPACITIES = tuple(2 ** i for i in range(1, 16))

CSV_COLUMNS = ["family", "learned", "d", "n", "leafCapacity", "strategy", "threads",
               "buildMs", "footprintBytes", "avgLookupNs", "p50Ns", "p99Ns", "qps"]


def measure_footprint(tree: IndexTree) -> int:
    """Bytes of internal-node arenas plus leaf headers; record storage excluded."""
    return tree.internal_bytes() + tree.leaves.header_bytes()


@dataclass
class BenchReport:
    family: str
    learned: bool
    d: int
    n: int
    leaf_capacity: int
    strategy: str
    threads: int
    build_ms: float
    partition_ms: float
    leaf_ms: float
    footprint_bytes: int
    avg_lookup_ns: float
    p50_ns: float
    p99_ns: float
    qps: float
    pass_ms: list = field(default_factory=list)
    checksum: str = ""
    dataset: str = ""
    workload: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    internal_fanout: int | None = None

    @property
    def mean_pass_ms(self) -> float:
        return float(np.mean(self.pass_ms)) if self.pass_ms else 0.0

    @property
    def variant(self) -> str:
        name = {"rtree": "RTree", "kdtree": "KDTree", "quadtree": "QuadTree"}[self.family]
        return ("IF-" if self.learned else "") + name

    def csv_row(self) -> dict:
        return {
            "family": self.family, "learned": int(self.learned), "d": self.d, "n": self.n,
            "leafCapacity": self.leaf_capacity, "strategy": self.strategy,
            "threads": self.threads, "buildMs": f"{self.build_ms:.3f}",
            "footprintBytes": self.footprint_bytes, "avgLookupNs": f"{self.avg_lookup_ns:.1f}",
            "p50Ns": f"{self.p50_ns:.1f}", "p99Ns": f"{self.p99_ns:.1f}", "qps": f"{self.qps:.1f}",
        }

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepSpec:
    capacities: tuple = DEFAULT_CAPACITIES
    families: tuple = tuple(Family)
    learned: tuple = (False, True)
    threads: tuple = (1,)
    strategy: SearchStrategy = SearchStrategy.BINARY
    internal_fanout: int | None = None

    def __post_init__(self):
        if not (self.capacities and self.families and self.learned and self.threads):
            raise ValueError("sweep spec must name at least one value per axis")

    def configs(self):
        for fam in self.families:
            for learned in self.learned:
                for cap in self.capacities:
                    yield BuildConfig(Family.parse(fam), learned, cap, self.internal_fanout,
                                      self.strategy)


# ---------------------------------------------------------------------------
# running queries
# ---------------------------------------------------------------------------

def _digest(tree: IndexTree, wl: Workload, strategy=None) -> np.ndarray:
    if wl.kind is WorkloadKind.POINT:
        return point_digest(tree, wl.queries, strategy)
    return range_digest(tree, wl.lo, wl.hi, strategy)


def _slice(wl: Workload, s: int, e: int) -> Workload:
    return Workload(wl.kind, wl.queries[s:e], wl.selectivity, wl.seed)


def _batches(wl: Workload, parts: int):
    """Split into ``parts`` contiguous batches of kernel-ready arrays (copied up front)."""
    bounds = np.linspace(0, len(wl), parts + 1).astype(int)
    out = []
    for i in range(parts):
        w = _slice(wl, bounds[i], bounds[i + 1])
        if len(w) == 0:
            continue
        if w.kind is WorkloadKind.POINT:
            out.append((True, np.ascontiguousarray(w.queries), None))
        else:
            out.append((False, w.lo, w.hi))
    return out


def _run_batch(tree: IndexTree, batch) -> np.ndarray:
    is_point, a, b = batch
    return point_digest(tree, a) if is_point else range_digest(tree, a, b)


def checksum(acc: np.ndarray) -> str:
    """Stable digest of per-query (count, id-checksum) pairs."""
    return hashlib.sha256(np.ascontiguousarray(acc, dtype="<i8").tobytes()).hexdigest()[:16]


def result_checksum(tree: IndexTree, wl: Workload, strategy=None) -> str:
    return checksum(_digest(tree, wl, strategy))


def _stats_pass(tree: IndexTree, wl: Workload) -> dict:
    if wl.kind is WorkloadKind.POINT:
        _, ids, st = point_query_many(tree, wl.queries, with_stats=True)
    else:
        _, ids, st = range_query_many(tree, wl.lo, wl.hi, with_stats=True)
    nq = max(1, len(wl))
    return {
        "nodes_per_query": st[K.NODES] / nq,
        "leaves_per_query": st[K.LEAVES] / nq,
        "compared_per_query": st[K.COMPARED] / nq,
        "results_per_query": ids.shape[0] / nq,
    }


def _timed_pass(tree: IndexTree, batch) -> float:
    t0 = time.perf_counter()
    _run_batch(tree, batch)
    return time.perf_counter() - t0


def _chunk_latencies(tree: IndexTree, batches) -> list:
    out = []
    for b in batches:
        t0 = time.perf_counter()
        _run_batch(tree, b)
        out.append((time.perf_counter() - t0) * 1e9 / b[1].shape[0])
    return out


def _threaded_pass(tree: IndexTree, batches, pool: ThreadPoolExecutor) -> float:
    t0 = time.perf_counter()
    list(pool.map(lambda b: _run_batch(tree, b), batches))
    return time.perf_counter() - t0


def run_benchmark(ds: Dataset, cfg: BuildConfig, wl: Workload, threads: int = 1, repeats: int = 3,
                  tree: IndexTree | None = None, chunks: int = 64,
                  collect_stats: bool = True) -> BenchReport:
    """Build (unless ``tree`` is given), warm up, then time ``repeats`` passes.

    Each pass runs the whole batch (split evenly over ``threads`` workers).
    ``avg_lookup_ns`` is the per-query latency a worker sees, i.e. pass time
    times threads over batch size; ``qps`` is batch size over pass time.
    Percentiles come from one further pass split into ``chunks`` sub-batches.
    """
    if wl.d != ds.d:
        raise ValueError(f"workload is {wl.d}-dimensional, dataset is {ds.d}-dimensional")
    if repeats < 1 or threads < 1:
        raise ValueError("repeats and threads must be positive")
    if tree is None:
        tree = build(ds.points, cfg=cfg)
    nq = len(wl)
    whole = _batches(wl, 1)[0]
    acc = _run_batch(tree, whole)  # warm-up, also the correctness fingerprint
    pass_s = []
    if threads == 1:
        for _ in range(repeats):
            pass_s.append(_timed_pass(tree, whole))
    else:
        parts = _batches(wl, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            _threaded_pass(tree, parts, pool)
            for _ in range(repeats):
                pass_s.append(_threaded_pass(tree, parts, pool))
    samples = _chunk_latencies(tree, _batches(wl, min(chunks, nq)))
    mean_s = float(np.mean(pass_s))
    return BenchReport(
        family=tree.family.value, learned=tree.learned, d=tree.d, n=tree.n,
        leaf_capacity=tree.config.leaf_capacity, strategy=tree.config.strategy.name.lower(),
        threads=threads, build_ms=tree.build_ms,
        partition_ms=tree.timings.get("partition_ms", 0.0), leaf_ms=tree.timings.get("leaf_ms", 0.0),
        footprint_bytes=measure_footprint(tree),
        avg_lookup_ns=mean_s * 1e9 * threads / nq,
        p50_ns=float(np.percentile(samples, 50)), p99_ns=float(np.percentile(samples, 99)),
        qps=nq / mean_s,
        pass_ms=[t * 1e3 for t in pass_s],
        checksum=checksum(acc),
        dataset=ds.name,
        workload={"kind": wl.kind.name.lower(), "queries": nq, "selectivity": wl.selectivity,
                  "seed": wl.seed},
        stats=_stats_pass(tree, wl) if collect_stats else {},
        internal_fanout=tree.config.internal_fanout,
    )


def run_sweep(ds: Dataset, spec: SweepSpec, wl: Workload, repeats: int = 3,
              progress=None) -> list[BenchReport]:
    reports = []
    for cfg in spec.configs():
        tree = build(ds.points, cfg=cfg)
        for t in spec.threads:
            rep = run_benchmark(ds, cfg, wl, threads=t, repeats=repeats, tree=tree,
                                collect_stats=False)
            reports.append(rep)
            if progress:
                progress(rep)
        del tree
    return reports


def best_capacities(reports: list[BenchReport], threads: int = 1) -> dict:
    """Argmin-latency leaf capacity per (family, learned).

    Ranks by the median pass time, which shrugs off a pass disturbed by
    other load better than the mean does.
    """
    best: dict = {}
    score: dict = {}
    for r in reports:
        if r.threads != threads:
            continue
        key = (r.family, r.learned)
        t = float(np.median(r.pass_ms)) if r.pass_ms else r.avg_lookup_ns
        if key not in best or t < score[key]:
            best[key] = r
            score[key] = t
    return {k: v.leaf_capacity for k, v in best.items()}


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def write_csv(reports: list[BenchReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerow(r.csv_row())


def write_json(reports: list[BenchReport], path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)


def write_plot_data(reports: list[BenchReport], path) -> None:
    """Long format: one row per (configuration, metric)."""
    metrics = ("build_ms", "footprint_bytes", "avg_lookup_ns", "p50_ns", "p99_ns", "qps")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "family", "learned", "d", "n", "leafCapacity", "threads",
                    "metric", "value"])
        for r in reports:
            for m in metrics:
                w.writerow([r.variant, r.family, int(r.learned), r.d, r.n, r.leaf_capacity,
                            r.threads, m, getattr(r, m)])


# ---------------------------------------------------------------------------
# index snapshots
#
# b"IFXI", u8 version, u8 family (0 rtree, 1 kdtree, 2 quadtree), u8 learned,
# u8 d, u8 strategy, i64 root, u32 leaf capacity, u32 internal fanout (0 =
# default), u32 max depth, u32 levels, u32 block count; then named array blocks:
# u16 name length, name, u16 dtype-descr length, descr, u8 ndim, ndim*u64
# shape, raw little-endian bytes. Leaf headers are one structured block laid
# out count, pdim, sdim, slope, base, max error, mean error.
# ---------------------------------------------------------------------------

SNAPSHOT_MAGIC = b"IFXI"
_SNAP_HEADER = struct.Struct("<4sBBBBBqIIIII")
_FAMILY_CODES = {Family.RTREE: 0, Family.KDTREE: 1, Family.QUADTREE_OCTREE: 2}


def _write_block(fh, name: str, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    descr = json.dumps(arr.dtype.descr if arr.dtype.names else arr.dtype.str).encode()
    nm = name.encode()
    fh.write(struct.pack("<H", len(nm)) + nm + struct.pack("<H", len(descr)) + descr)
    fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes())


def _read_block(buf: memoryview, off: int):
    (ln,) = struct.unpack_from("<H", buf, off); off += 2
    name = bytes(buf[off:off + ln]).decode(); off += ln
    (ld,) = struct.unpack_from("<H", buf, off); off += 2
    descr = json.loads(bytes(buf[off:off + ld]).decode()); off += ld
    dt = np.dtype([tuple(x) for x in descr]) if isinstance(descr, list) else np.dtype(descr)
    (ndim,) = struct.unpack_from("<B", buf, off); off += 1
    shape = struct.unpack_from(f"<{ndim}Q", buf, off); off += 8 * ndim
    nbytes = int(np.prod(shape)) * dt.itemsize
    arr = np.frombuffer(buf[off:off + nbytes], dtype=dt).reshape(shape).copy()
    return name, arr, off + nbytes


def leaf_headers(leaves: LeafStore) -> np.ndarray:
    counts = np.diff(leaves.start).astype("<u4")
    if not leaves.learned:
        h = np.zeros(leaves.count, dtype=PLAIN_LEAF_HEADER)
        h["count"] = counts
        return h
    h = np.zeros(leaves.count, dtype=IF_LEAF_HEADER)
    h["count"] = counts
    h["pdim"] = leaves.pdim
    h["sdim"] = leaves.sdim
    h["slope"] = leaves.slope
    h["base"] = leaves.base
    h["max_err"] = leaves.max_err
    h["mean_err"] = leaves.mean_err
    return h


def save_index(tree: IndexTree, path) -> None:
    cfg = tree.config
    blocks = dict(tree.arena)
    blocks["leaf_headers"] = leaf_headers(tree.leaves)
    blocks["records"] = tree.leaves.points
    blocks["payload"] = tree.leaves.ids
    blocks["bounds"] = np.stack([tree.bounds.lo, tree.bounds.hi])
    with open(path, "wb") as fh:
        fh.write(_SNAP_HEADER.pack(SNAPSHOT_MAGIC, 1, _FAMILY_CODES[cfg.family], int(cfg.learned),
                                   tree.d, int(cfg.strategy), tree.root, cfg.leaf_capacity,
                                   cfg.internal_fanout or 0, cfg.max_depth, tree.levels,
                                   len(blocks)))
        for name, arr in blocks.items():
            _write_block(fh, name, arr)


def load_index(path) -> IndexTree:
    raw = memoryview(Path(path).read_bytes())
    if len(raw) < _SNAP_HEADER.size:
        raise ValueError(f"{path}: truncated snapshot")
    (magic, version, fam, learned, d, strategy, root, cap, fanout, max_depth, levels,
     nblocks) = _SNAP_HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC or version != 1:
        raise ValueError(f"{path}: not an index snapshot")
    family = {v: k for k, v in _FAMILY_CODES.items()}.get(fam)
    if family is None:
        raise ValueError(f"{path}: unknown family code {fam}")
    off = _SNAP_HEADER.size
    blocks = {}
    try:
        for _ in range(nblocks):
            name, arr, off = _read_block(raw, off)
            blocks[name] = arr
    except (struct.error, ValueError, TypeError) as exc:
        raise ValueError(f"{path}: corrupt snapshot ({exc})") from None
    missing = {"leaf_headers", "records", "payload", "bounds"} - blocks.keys()
    if missing:
        raise ValueError(f"{path}: snapshot lacks {sorted(missing)}")
    cfg = BuildConfig(family, bool(learned), cap, fanout or None, SearchStrategy(strategy), max_depth)
    hdr = blocks.pop("leaf_headers")
    pts = blocks.pop("records")
    ids = blocks.pop("payload")
    bounds = blocks.pop("bounds")
    start = np.concatenate([[0], np.cumsum(hdr["count"].astype(np.int64))]).astype(np.int64)
    nleaf = hdr.shape[0]
    if learned:
        leaves = LeafStore(pts, ids, start, True, hdr["pdim"].astype(np.int64),
                           hdr["sdim"].astype(np.int64), hdr["slope"].astype(np.float64),
                           hdr["base"].astype(np.float64), hdr["max_err"].astype(np.int64),
                           hdr["mean_err"].astype(np.float64))
    else:
        z = np.zeros(nleaf, dtype=np.int64)
        zf = np.zeros(nleaf)
        leaves = LeafStore(pts, ids, start, False, z, z, zf, zf, z, zf)
    return IndexTree(cfg, d, int(root), blocks, leaves, MBR(bounds[0], bounds[1]), {}, levels)
