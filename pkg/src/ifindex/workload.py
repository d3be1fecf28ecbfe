"""Datasets, synthetic generators and query workloads.

File formats
------------
CSV
    UTF-8, one point per line, ``d`` comma-separated decimal fields, optional
    single header line (detected when the first line does not parse).
Binary dataset (``.ifxd``)
    ``b"IFXD"``, u8 version, u8 d, u64 count, then ``count * d`` little-endian
    float32 values, row-major.
Raw float32 (``.raw``, ``.f32``)
    headerless little-endian float32 values, ``d`` per record; ``d`` must be
    supplied by the caller.
Binary workload (``.ifxw``)
    ``b"IFXW"``, u8 version, u8 d, u8 kind (0 point, 1 range), u64 sigma,
    u64 seed, u64 count, then the query coordinates as little-endian float32:
    ``count * d`` for point workloads, ``count * 2d`` (lower corner then upper
    corner per query) for range workloads.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geometry import COORD_DTYPE, RangeQuery, as_points

log = logging.getLogger(__name__)

DATASET_MAGIC = b"IFXD"
WORKLOAD_MAGIC = b"IFXW"
FORMAT_VERSION = 1
_DATASET_HEADER = struct.Struct("<4sBBQ")
_WORKLOAD_HEADER = struct.Struct("<4sBBBQQQ")

SELECTIVITIES = (10, 100, 1000, 10000)
FIXTURE_DIR = Path(__file__).parent / "data"


@dataclass
class Dataset:
    name: str
    points: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.points = as_points(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.n


class WorkloadKind(enum.IntEnum):
    POINT = 0
    RANGE = 1


@dataclass
class Workload:
    """Replayable query batch; range queries are stored as corner arrays."""

    kind: WorkloadKind
    queries: np.ndarray  # (n, d) points, or (n, 2, d) lower/upper corners
    selectivity: int | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.queries.shape[-1]

    def __len__(self):
        return self.queries.shape[0]

    @property
    def lo(self) -> np.ndarray:
        return np.ascontiguousarray(self.queries[:, 0, :])

    @property
    def hi(self) -> np.ndarray:
        return np.ascontiguousarray(self.queries[:, 1, :])

    def range_queries(self) -> list[RangeQuery]:
        if self.kind is not WorkloadKind.RANGE:
            raise ValueError("not a range workload")
        return [RangeQuery(lo, hi) for lo, hi in self.queries]


# ---------------------------------------------------------------------------
# loading and saving
# ---------------------------------------------------------------------------

def _infer_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in (".csv", ".txt"):
        return "csv"
    return "raw" if suffix in (".raw", ".f32") else "binary"


def _parse_csv(text: str, d: int | None, path) -> np.ndarray:
    rows = []
    reader = csv.reader(io.StringIO(text))
    first = True
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            vals = [float(c) for c in row]
        except ValueError:
            if first:
                first = False
                continue  # header line
            raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
        first = False
        if d is None:
            d = len(vals)
        if len(vals) != d:
            raise ValueError(f"{path}:{lineno}: expected {d} fields, got {len(vals)}")
        rows.append(vals)
    if d is None:
        raise ValueError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64).reshape(-1, d)


def _read_binary(path: Path, d: int | None) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _DATASET_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, fd, count = _DATASET_HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if d is not None and fd != d:
        raise ValueError(f"{path}: file holds {fd}-dimensional points, expected {d}")
    body = np.frombuffer(raw, dtype="<f4", offset=_DATASET_HEADER.size)
    if body.size != count * fd:
        raise ValueError(f"{path}: expected {count * fd} values, found {body.size}")
    return body.reshape(count, fd).astype(COORD_DTYPE)


def _read_raw(path: Path, d: int | None) -> np.ndarray:
    """Headerless little-endian float32 records, ``d`` values each."""
    if d is None:
        raise ValueError(f"{path}: raw float32 input needs the dimensionality")
    body = np.fromfile(path, dtype="<f4")
    if body.size % d:
        raise ValueError(f"{path}: {body.size} values do not split into {d}-dimensional records")
    return body.reshape(-1, d).astype(COORD_DTYPE)


def load_dataset(path, fmt: str | None = None, d: int | None = None, limit: int | None = None,
                 seed: int = 0, sampling: str = "reservoir", strict: bool = False,
                 name: str | None = None) -> Dataset:
    """Read a CSV or binary point file, dropping non-finite rows.

    ``limit`` keeps a seeded uniform sample (``sampling="reservoir"``) or the
    first ``limit`` rows (``sampling="prefix"``). Asking for more rows than
    exist is an error only when ``strict``.
    """
    path = Path(path)
    fmt = fmt or _infer_format(path)
    if fmt == "csv":
        arr = _parse_csv(path.read_text(encoding="utf-8"), d, path)
    elif fmt in ("binary", "bin", "ifxd"):
        arr = _read_binary(path, d)
    elif fmt == "raw":
        arr = _read_raw(path, d)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    finite = np.all(np.isfinite(arr), axis=1)
    dropped = int((~finite).sum())
    if dropped:
        log.warning("%s: dropped %d row(s) with non-finite coordinates", path, dropped)
        arr = arr[finite]
    arr = arr.astype(COORD_DTYPE)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: coordinates overflow single precision")
    if limit is not None and limit < arr.shape[0]:
        if sampling == "prefix":
            arr = arr[:limit]
        elif sampling == "reservoir":
            keep = np.sort(np.random.default_rng(seed).choice(arr.shape[0], size=limit, replace=False))
            arr = arr[keep]
        else:
            raise ValueError(f"unknown sampling mode {sampling!r}")
    elif limit is not None and limit > arr.shape[0] and strict:
        raise ValueError(f"{path}: requested {limit} records but only {arr.shape[0]} available")
    return Dataset(name or path.stem, arr, source=str(path))


def save_dataset(ds: Dataset, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or _infer_format(path)
    if fmt == "csv":
        np.savetxt(path, ds.points, delimiter=",", fmt="%.9g")
        return
    if fmt == "raw":
        ds.points.astype("<f4").tofile(path)
        return
    with open(path, "wb") as fh:
        fh.write(_DATASET_HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, ds.d, ds.n))
        fh.write(ds.points.astype("<f4").tobytes())


def save_workload(wl: Workload, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_WORKLOAD_HEADER.pack(WORKLOAD_MAGIC, FORMAT_VERSION, wl.d, int(wl.kind),
                                       wl.selectivity or 0, wl.seed, len(wl)))
        fh.write(np.ascontiguousarray(wl.queries, dtype="<f4").tobytes())


def load_workload(path) -> Workload:
    raw = Path(path).read_bytes()
    if len(raw) < _WORKLOAD_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, d, kind, sigma, seed, count = _WORKLOAD_HEADER.unpack_from(raw)
    if magic != WORKLOAD_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    kind = WorkloadKind(kind)
    body = np.frombuffer(raw, dtype="<f4", offset=_WORKLOAD_HEADER.size).astype(COORD_DTYPE)
    shape = (count, d) if kind is WorkloadKind.POINT else (count, 2, d)
    if body.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload size does not match header")
    return Workload(kind, body.reshape(shape), sigma or None, seed)


def download_dataset(name: str, dest) -> Path:
    """Placeholder for fetching the real osm / 3DScans extracts.

    Acquisition depends on the environment (the osm extract comes from a
    Geofabrik PBF dump that must be converted to lat,lon[,timestamp] CSV with
    an external tool), so this only reports what to fetch.
    """
    sources = {
        "osm": "https://download.geofabrik.de/north-america/us-northeast-latest.osm.pbf",
        "3dscans": "Zagreb cathedral 3D scan point cloud (robotic 3D scan repository)",
    }
    if name not in sources:
        raise ValueError(f"unknown dataset {name!r}; known: {sorted(sources)}")
    raise RuntimeError(
        f"automatic download is not available; fetch {sources[name]} manually, convert it to "
        f"CSV and place it at {dest}"
    )


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def make_uniform(n: int, d: int = 2, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    return Dataset(f"uniform{d}d", rng.random((n, d)).astype(COORD_DTYPE), f"uniform(seed={seed})")


def make_gaussian_clusters(n: int, d: int = 2, seed: int = 0, clusters: int = 20) -> Dataset:
    rng = np.random.default_rng(seed)
    centers = rng.random((clusters, d))
    widths = 10 ** rng.uniform(-3, -1.3, size=clusters)
    weights = rng.dirichlet(np.ones(clusters))
    which = rng.choice(clusters, size=n, p=weights)
    pts = centers[which] + rng.normal(size=(n, d)) * widths[which, None]
    return Dataset(f"gauss{d}d", pts.astype(COORD_DTYPE), f"gaussian_clusters(seed={seed})")


def make_skewed(n: int, d: int = 2, seed: int = 0) -> Dataset:
    """Coastline-like mixture: a dense wiggly band, heavy-tailed city clusters
    and a sparse background, with coordinates quantized like GPS fixes.

    The third coordinate (when ``d == 3``) behaves like a timestamp: most
    records fall in recent years with bursts.
    """
    rng = np.random.default_rng(seed)
    parts = rng.multinomial(n, [0.45, 0.45, 0.10])
    # coastline band along a meandering curve
    t = rng.random(parts[0])
    x = t
    y = 0.55 + 0.18 * np.sin(7.0 * t) + 0.06 * np.sin(23.0 * t + 1.0)
    jitter = rng.standard_cauchy(size=(parts[0], 2)) * 0.002
    band = np.column_stack([x, y]) + np.clip(jitter, -0.05, 0.05)
    # cities: power-law populations, tight cores
    ncity = 60
    centers = rng.random((ncity, 2)) * [1.0, 0.6] + [0.0, 0.25]
    pop = rng.pareto(1.2, size=ncity) + 1.0
    which = rng.choice(ncity, size=parts[1], p=pop / pop.sum())
    spread = 10 ** rng.uniform(-3.3, -1.8, size=ncity)
    city = centers[which] + rng.normal(size=(parts[1], 2)) * spread[which, None]
    background = rng.random((parts[2], 2))
    xy = np.vstack([band, city, background])
    xy = np.round(xy * 1e5) / 1e5  # ~1 m grid, produces repeated values
    cols = [xy]
    if d >= 3:
        years = rng.choice(12, size=n, p=np.linspace(1, 4, 12) / np.linspace(1, 4, 12).sum())
        burst = rng.random(n) < 0.3
        day = np.where(burst, rng.integers(0, 5, size=n) * 70, rng.integers(0, 365, size=n))
        cols.append((years * 365 + day).astype(np.float64)[:, None])
    if d > 3:
        cols.append(rng.random((n, d - 3)))
    pts = np.hstack(cols)[rng.permutation(n)]
    return Dataset(f"skewed{d}d", pts.astype(COORD_DTYPE), f"skewed_mixture(seed={seed})")


SYNTHETIC = {
    "uniform": make_uniform,
    "gaussian": make_gaussian_clusters,
    "skewed": make_skewed,
}


def make_dataset(kind: str, n: int, d: int = 2, seed: int = 0) -> Dataset:
    try:
        gen = SYNTHETIC[kind]
    except KeyError:
        raise ValueError(f"unknown synthetic dataset {kind!r}; choose from {sorted(SYNTHETIC)}") from None
    return gen(n, d, seed)


def fixture(name: str = "osm_standin_2d", **kwargs) -> Dataset:
    """Load one of the small CSV extracts shipped with the package."""
    path = FIXTURE_DIR / f"{name}.csv"
    if not path.exists():
        known = sorted(p.stem for p in FIXTURE_DIR.glob("*.csv"))
        raise FileNotFoundError(f"no fixture {name!r}; available: {known}")
    return load_dataset(path, "csv", name=name, **kwargs)


# ---------------------------------------------------------------------------
# workloads
# ---------------------------------------------------------------------------

def gen_point_queries(ds: Dataset, n: int, seed: int) -> Workload:
    """``n`` stored points drawn uniformly with replacement."""
    if ds.n == 0:
        raise ValueError("cannot sample queries from an empty dataset")
    if n < 1:
        raise ValueError("need at least one query")
    idx = np.random.default_rng(seed).integers(0, ds.n, size=n)
    return Workload(WorkloadKind.POINT, ds.points[idx].copy(), None, seed)


def knn_indices(points: np.ndarray, anchors: np.ndarray, k: int, tree: cKDTree | None = None,
                chunk: int = 256) -> np.ndarray:
    """Indices of the ``k`` Euclidean nearest stored points of each anchor."""
    tree = tree or cKDTree(points.astype(np.float64))
    out = np.empty((anchors.shape[0], k), dtype=np.int64)
    step = max(1, chunk * 1000 // max(k, 1))
    for s in range(0, anchors.shape[0], step):
        _, idx = tree.query(anchors[s:s + step].astype(np.float64), k=k)
        out[s:s + step] = np.asarray(idx).reshape(-1, k)
    return out


def gen_range_queries(ds: Dataset, sigma: int, n: int, seed: int) -> Workload:
    """Boxes enclosing the ``sigma`` nearest neighbours of random stored anchors."""
    if sigma < 1 or sigma > ds.n:
        raise ValueError(f"selectivity {sigma} outside 1..{ds.n}")
    if n < 1:
        raise ValueError("need at least one query")
    rng = np.random.default_rng(seed)
    anchors = ds.points[rng.integers(0, ds.n, size=n)]
    nbrs = knn_indices(ds.points, anchors, sigma)
    boxes = np.empty((n, 2, ds.d), dtype=COORD_DTYPE)
    for i in range(n):
        sel = ds.points[nbrs[i]]
        boxes[i, 0] = sel.min(axis=0)
        boxes[i, 1] = sel.max(axis=0)
    return Workload(WorkloadKind.RANGE, boxes, sigma, seed)
