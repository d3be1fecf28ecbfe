"""``ifindex`` command line: build, query, bench, sweep, gen-workload, gen-data.

Exit codes: 0 success, 1 runtime or IO failure, 2 usage or configuration error.
Human-readable output goes to stdout; machine-readable output only to --out files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .builders import BuildConfig, Family, build
from .geometry import RangeQuery, as_point
from .leaf_model import SearchStrategy
from .query_engine import point_query_many, range_query_many, split_csr
from .workload import (SYNTHETIC, Dataset, Workload, WorkloadKind, fixture, gen_point_queries,
                       gen_range_queries, load_dataset, load_workload, make_dataset, save_dataset,
                       save_workload)

log = logging.getLogger("ifindex")

DEFAULT_POINT_QUERIES = 1_000_000
DEFAULT_RANGE_QUERIES = 10_000


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    """Parse ``1,4,16`` or a power-of-two range ``2..32768``."""
    text = text.strip()
    if ".." in text:
        lo, hi = (int(x) for x in text.split(".."))
        out, v = [], lo
        while v <= hi:
            out.append(v)
            v *= 2
        return out
    return [int(x) for x in text.split(",") if x]


def _coords(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def _parse_range(text: str) -> tuple[list[float], list[float]]:
    lo, hi = [], []
    for part in text.split(":"):
        a, b = _coords(part)
        lo.append(a)
        hi.append(b)
    return lo, hi


# ---------------------------------------------------------------------------
# shared flag groups
# ---------------------------------------------------------------------------

def _add_data_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("dataset")
    g.add_argument("--data", type=Path, help="CSV or binary (.ifxd) point file")
    g.add_argument("--synthetic", choices=sorted(SYNTHETIC), help="generate the dataset instead")
    g.add_argument("--fixture", help="load a bundled extract, e.g. osm_standin_2d")
    g.add_argument("--n", type=int, default=100_000, help="synthetic dataset size")
    g.add_argument("--dims", type=int, help="point dimensionality (2 or 3)")
    g.add_argument("--data-format", choices=["csv", "binary", "raw"],
                   help="override format detection; raw is headerless float32 and needs --dims")
    g.add_argument("--limit", type=int, help="sample this many records from --data")
    g.add_argument("--sampling", choices=["reservoir", "prefix"], default="reservoir")
    g.add_argument("--seed", type=int, help="seed for every randomized step")


def _add_build_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("index")
    g.add_argument("--family", default="rtree", help="rtree | kdtree | quadtree (octree in 3D)")
    g.add_argument("--learned", action="store_true", help="IF variant with interpolation leaves")
    g.add_argument("--leaf-capacity", type=int, default=16)
    g.add_argument("--fanout", type=int, help="R-tree internal fanout (default: leaf capacity)")
    g.add_argument("--strategy", default="binary", choices=["binary", "linear", "exponential"])
    g.add_argument("--max-depth", type=int, default=32)
    g.add_argument("--workers", type=int, default=1, help="threads for leaf construction")


def _needs_seed(args, why: str):
    if args.seed is None:
        raise UsageError(f"--seed is required when {why}")


def _dataset(args) -> Dataset:
    sources = [x for x in (args.data, args.synthetic, args.fixture) if x is not None]
    if len(sources) != 1:
        raise UsageError("exactly one of --data, --synthetic or --fixture is required")
    if args.synthetic:
        _needs_seed(args, "generating a synthetic dataset")
        return make_dataset(args.synthetic, args.n, args.dims or 2, args.seed)
    if args.limit is not None and args.sampling == "reservoir":
        _needs_seed(args, "sampling with --limit")
    if args.fixture:
        return fixture(args.fixture, d=args.dims, limit=args.limit, seed=args.seed or 0,
                       sampling=args.sampling)
    return load_dataset(args.data, args.data_format, args.dims, args.limit,
                        seed=args.seed or 0, sampling=args.sampling)


def _config(args, d: int) -> BuildConfig:
    try:
        cfg = BuildConfig(Family.parse(args.family), args.learned, args.leaf_capacity, args.fanout,
                          SearchStrategy.parse(args.strategy), args.max_depth, args.workers)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    if cfg.family is Family.QUADTREE_OCTREE and d not in (2, 3):
        raise UsageError(f"quadtree/octree needs --dims 2 or 3, got {d}")
    return cfg


def _check_dims(args):
    if args.dims is not None and args.dims < 1:
        raise UsageError("--dims must be positive")
    fam = getattr(args, "family", None)
    if fam is not None and args.dims is not None:
        try:
            quad = Family.parse(fam) is Family.QUADTREE_OCTREE
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if quad and args.dims not in (2, 3):
            raise UsageError(f"quadtree/octree needs --dims 2 or 3, got {args.dims}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_build(args) -> int:
    _check_dims(args)
    ds = _dataset(args)
    cfg = _config(args, ds.d)
    tree = build(ds.points, cfg=cfg)
    fp = bench.measure_footprint(tree)
    print(f"built {cfg.label()} over {tree.n} {tree.d}D points: leaf capacity {cfg.leaf_capacity}, "
          f"{tree.leaves.count} leaves, {tree.internal_node_count} internal nodes")
    print(f"build time {tree.build_ms:.1f} ms (partition {tree.timings['partition_ms']:.1f} ms, "
          f"leaves {tree.timings['leaf_ms']:.1f} ms); footprint {fp} bytes")
    if args.snapshot:
        bench.save_index(tree, args.snapshot)
        print(f"snapshot written to {args.snapshot}")
    return 0


def cmd_query(args) -> int:
    if args.index:
        tree = bench.load_index(args.index)
    else:
        _check_dims(args)
        ds = _dataset(args)
        tree = build(ds.points, cfg=_config(args, ds.d))
    if not (args.point or args.range or args.workload):
        raise UsageError("give --point, --range or --workload")
    results: list[set] = []
    labels: list[str] = []
    try:
        if args.point:
            pts = np.array([as_point(_coords(p)) for p in args.point]) if all(
                len(_coords(p)) == tree.d for p in args.point) else None
            if pts is None:
                raise ValueError(f"point dimensionality does not match the {tree.d}D index")
            off, ids, _ = point_query_many(tree, pts)
            results += split_csr(off, ids)
            labels += args.point
        if args.range:
            boxes = [_parse_range(r) for r in args.range]
            if any(len(lo) != tree.d for lo, _ in boxes):
                raise ValueError(f"range dimensionality does not match the {tree.d}D index")
            for lo, hi in boxes:
                RangeQuery(lo, hi)  # validates lo <= hi
            lo = np.array([b[0] for b in boxes])
            hi = np.array([b[1] for b in boxes])
            off, ids, _ = range_query_many(tree, lo, hi)
            results += split_csr(off, ids)
            labels += args.range
        if args.workload:
            wl = load_workload(args.workload)
            if wl.d != tree.d:
                raise ValueError(f"workload is {wl.d}D but the index is {tree.d}D")
            if wl.kind is WorkloadKind.POINT:
                off, ids, _ = point_query_many(tree, wl.queries)
            else:
                off, ids, _ = range_query_many(tree, wl.lo, wl.hi)
            results += split_csr(off, ids)
            labels += [f"{args.workload}#{i}" for i in range(len(wl))]
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for label, ids in zip(labels, results):
        if args.count_only:
            print(f"{label}\t{len(ids)}")
        else:
            print(f"{label}\t{' '.join(str(i) for i in sorted(ids))}")
    return 0


def _workload_from_args(args, ds: Dataset) -> Workload:
    if args.workload:
        wl = load_workload(args.workload)
        if wl.d != ds.d:
            raise ValueError(f"workload is {wl.d}D but the dataset is {ds.d}D")
        return wl
    _needs_seed(args, "generating queries")
    return _generate(args, ds)


def _generate(args, ds: Dataset) -> Workload:
    if args.kind == "point":
        return gen_point_queries(ds, args.queries or DEFAULT_POINT_QUERIES, args.seed)
    return gen_range_queries(ds, args.sigma, args.queries or DEFAULT_RANGE_QUERIES, args.seed)


def _add_workload_flags(p):
    g = p.add_argument_group("workload")
    g.add_argument("--workload", type=Path, help="replay a saved .ifxw workload")
    g.add_argument("--kind", choices=["point", "range"], default="point")
    g.add_argument("--sigma", type=int, default=100, help="range query selectivity")
    g.add_argument("--queries", type=int,
                   help="batch size (default 1M point or 10k range queries)")


def _add_report_flags(p):
    g = p.add_argument_group("reporting")
    g.add_argument("--threads", default="1", help="comma list, e.g. 1,4")
    g.add_argument("--repeats", type=int, default=3)
    g.add_argument("--out", type=Path, help="report file")
    g.add_argument("--format", dest="report_format", choices=["csv", "json"],
                   help="report format (default from --out suffix)")
    g.add_argument("--plot-data", type=Path, help="also write long-format CSV for plotting")


def _write_reports(args, reports):
    if args.out:
        fmt = args.report_format or ("json" if args.out.suffix == ".json" else "csv")
        (bench.write_json if fmt == "json" else bench.write_csv)(reports, args.out)
        print(f"report written to {args.out}")
    if args.plot_data:
        bench.write_plot_data(reports, args.plot_data)


def cmd_bench(args) -> int:
    _check_dims(args)
    ds = _dataset(args)
    cfg = _config(args, ds.d)
    wl = _workload_from_args(args, ds)
    tree = build(ds.points, cfg=cfg)
    reports = []
    for t in _int_list(args.threads):
        r = bench.run_benchmark(ds, cfg, wl, threads=t, repeats=args.repeats, tree=tree)
        reports.append(r)
        print(f"{cfg.label():12s} cap={cfg.leaf_capacity:<6d} threads={t:<3d} "
              f"avg={r.avg_lookup_ns:9.1f} ns  p99={r.p99_ns:9.1f} ns  qps={r.qps:12.0f}  "
              f"checksum={r.checksum}")
    _write_reports(args, reports)
    return 0


def cmd_sweep(args) -> int:
    _check_dims(args)
    ds = _dataset(args)
    wl = _workload_from_args(args, ds)
    families = [Family.parse(f) for f in args.families.split(",")]
    if ds.d not in (2, 3) and Family.QUADTREE_OCTREE in families:
        raise UsageError(f"quadtree/octree needs 2 or 3 dimensions, dataset has {ds.d}")
    learned = {"both": (False, True), "true": (True,), "false": (False,)}[args.learned_mode]
    spec = bench.SweepSpec(tuple(_int_list(args.capacities)), tuple(families), learned,
                           tuple(_int_list(args.threads)), SearchStrategy.parse(args.strategy),
                           args.fanout)

    def progress(r):
        print(f"{r.variant:12s} cap={r.leaf_capacity:<6d} threads={r.threads:<3d} "
              f"avg={r.avg_lookup_ns:9.1f} ns  footprint={r.footprint_bytes}")

    reports = bench.run_sweep(ds, spec, wl, repeats=args.repeats, progress=progress)
    print("best leaf capacity:")
    for (fam, lrn), cap in sorted(bench.best_capacities(reports, spec.threads[0]).items()):
        print(f"  {BuildConfig(fam, lrn).label():14s} {cap}")
    _write_reports(args, reports)
    return 0


def cmd_gen_workload(args) -> int:
    _check_dims(args)
    _needs_seed(args, "generating a workload")
    ds = _dataset(args)
    wl = _generate(args, ds)
    save_workload(wl, args.out)
    print(f"wrote {len(wl)} {args.kind} queries to {args.out}")
    return 0


def cmd_gen_data(args) -> int:
    _needs_seed(args, "generating data")
    ds = make_dataset(args.kind, args.n, args.dims, args.seed)
    save_dataset(ds, args.out, args.data_format)
    print(f"wrote {ds.n} {ds.d}D {args.kind} points to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifindex", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build an index and report build time and footprint")
    _add_data_flags(p)
    _add_build_flags(p)
    p.add_argument("--snapshot", type=Path, help="write the built index to this file")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="run point/range queries and print matching ids")
    _add_data_flags(p)
    _add_build_flags(p)
    p.add_argument("--index", type=Path, help="load a snapshot instead of building")
    p.add_argument("--point", action="append", help="x,y[,z]; repeatable")
    p.add_argument("--range", action="append", help="l0,u0:l1,u1[:l2,u2]; repeatable")
    p.add_argument("--workload", type=Path, help="replay a saved .ifxw workload")
    p.add_argument("--count-only", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="time one configuration")
    _add_data_flags(p)
    _add_build_flags(p)
    _add_workload_flags(p)
    _add_report_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="tune leaf capacity across families")
    _add_data_flags(p)
    _add_workload_flags(p)
    _add_report_flags(p)
    p.add_argument("--families", default="rtree,kdtree,quadtree")
    p.add_argument("--learned-mode", choices=["both", "true", "false"], default="both")
    p.add_argument("--capacities", default="2..32768")
    p.add_argument("--strategy", default="binary", choices=["binary", "linear", "exponential"])
    p.add_argument("--fanout", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-workload", help="generate and save a replayable workload")
    _add_data_flags(p)
    p.add_argument("--kind", choices=["point", "range"], default="point")
    p.add_argument("--sigma", type=int, default=100)
    p.add_argument("--queries", type=int,
                   help="batch size (default 1M point or 10k range queries)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("--kind", choices=sorted(SYNTHETIC), default="skewed")
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--seed", type=int)
    p.add_argument("--data-format", choices=["csv", "binary", "raw"],
                   help="default from --out suffix")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ifindex: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"ifindex: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
