"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with the measured
numbers, then asserts.  Timing criteria share one tuning sweep on 1M skewed
2D points: every (variant, capacity) tree is built once and timed on both the
point and the range workload.
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from ifindex import bench
from ifindex.builders import BuildConfig, Family, build
from ifindex.leaf_model import SearchStrategy, build_leaf
from ifindex.query_engine import point_digest, point_query_many, range_query_many
from ifindex.workload import fixture, gen_point_queries, gen_range_queries, make_dataset
from conftest import VERDICTS
from oracles import predict_position, two_point_fit

pytestmark = pytest.mark.slow

VARIANTS = [(fam, learned) for fam in Family for learned in (False, True)]
SIGMAS = (10, 100, 1000)
BIG_N = 1_000_000
SWEEP_QUERIES = 20_000
RANGE_QUERIES = 1000
MEDIAN_RUNS = 5


@pytest.fixture
def verdict(request):
    """Print ``criterion N: PASS|FAIL  detail`` at once and in the summary, then assert."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        assert ok, line

    return record


def label(fam, learned) -> str:
    return BuildConfig(fam, learned).label()


def variant_name(fam, learned, d) -> str:
    """Quadtree and octree count as separate variants, giving eight in total."""
    name = label(fam, learned)
    return name.replace("Quad", "Oct") if d == 3 and fam is Family.QUADTREE_OCTREE else name


def median_ms(report) -> float:
    return float(np.median(report.pass_ms))


# ---------------------------------------------------------------------------
# brute-force oracles in CSR form
# ---------------------------------------------------------------------------

def scan_points_csr(points, queries):
    hits = [np.flatnonzero(np.all(points == q, axis=1)) for q in queries]
    return _csr(hits)


def scan_ranges_csr(points, lo, hi):
    hits = [np.flatnonzero(np.all((points >= l) & (points <= h), axis=1)) for l, h in zip(lo, hi)]
    return _csr(hits)


def _csr(hits):
    offsets = np.zeros(len(hits) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([h.size for h in hits])
    ids = np.concatenate(hits) if hits else np.empty(0, np.int64)
    return offsets, ids.astype(np.int64)


def sorted_segments(offsets, ids):
    seg = np.repeat(np.arange(offsets.size - 1), np.diff(offsets))
    return ids[np.lexsort((ids, seg))]


def count_mismatches(got, want) -> int:
    g_off, g_ids = got
    w_off, w_ids = want
    g_ids = sorted_segments(g_off, g_ids)
    if np.array_equal(g_off, w_off) and np.array_equal(g_ids, w_ids):
        return 0
    bad = 0
    for i in range(w_off.size - 1):
        a = g_ids[g_off[i]:g_off[i + 1]]
        b = w_ids[w_off[i]:w_off[i + 1]]
        bad += not np.array_equal(a, b)
    return bad


# ---------------------------------------------------------------------------
# criteria 1 and 3: exactness and strategy equivalence
# ---------------------------------------------------------------------------

DATASETS = [
    ("uniform", 50_000, 2, 11),
    ("gaussian", 100_000, 2, 12),
    ("skewed", 100_000, 2, 13),
    ("uniform", 20_000, 3, 14),
    ("gaussian", 50_000, 3, 15),
    ("skewed", 10_000, 3, 16),
]
EXACT_CAPACITIES = (16, 512)


@pytest.fixture(scope="module")
def exactness_run():
    """Every variant against the scan oracle, plus per-strategy results for IF variants."""
    t0 = time.perf_counter()
    mismatches, checked = 0, 0
    strategy_diffs, strategy_checked = 0, 0
    variants_seen = set()
    extra = 0.0
    for kind, n, d, seed in DATASETS:
        ds = make_dataset(kind, n, d, seed)
        pq = gen_point_queries(ds, 10_000, seed + 100)
        rqs = [gen_range_queries(ds, s, 1000, seed + 200 + s) for s in SIGMAS]
        want_p = scan_points_csr(ds.points, pq.queries)
        want_r = [scan_ranges_csr(ds.points, w.lo, w.hi) for w in rqs]
        for fam, learned in VARIANTS:
            for cap in EXACT_CAPACITIES:
                tree = build(ds.points, cfg=BuildConfig(fam, learned, cap))
                variants_seen.add(variant_name(fam, learned, d))
                off, ids, _ = point_query_many(tree, pq.queries)
                mismatches += count_mismatches((off, ids), want_p)
                checked += len(pq)
                for w, want in zip(rqs, want_r):
                    off, ids, _ = range_query_many(tree, w.lo, w.hi)
                    mismatches += count_mismatches((off, ids), want)
                    checked += len(w)
                if not learned:
                    continue
                # strategy comparison is criterion 3; keep it off criterion 1's clock
                s0 = time.perf_counter()
                for strat in (SearchStrategy.LINEAR, SearchStrategy.EXPONENTIAL):
                    off, ids, _ = point_query_many(tree, pq.queries, strat)
                    strategy_diffs += count_mismatches((off, ids), want_p)
                    strategy_checked += len(pq)
                    for w, want in zip(rqs, want_r):
                        off, ids, _ = range_query_many(tree, w.lo, w.hi, strat)
                        strategy_diffs += count_mismatches((off, ids), want)
                        strategy_checked += len(w)
                extra += time.perf_counter() - s0
    elapsed = time.perf_counter() - t0 - extra
    return dict(mismatches=mismatches, checked=checked, elapsed=elapsed,
                strategy_diffs=strategy_diffs, strategy_checked=strategy_checked,
                variants=len(variants_seen))


class TestCorrectness:
    def test_criterion_1_oracle_exactness(self, verdict, exactness_run):
        """All 8 variants (quadtree in 2D, octree in 3D) agree with a linear scan."""
        r = exactness_run
        ok = r["mismatches"] == 0 and r["elapsed"] < 300 and r["variants"] == 8
        verdict(1, ok, f"{r['mismatches']} mismatches over {r['checked']} queries, "
                       f"{len(DATASETS)} datasets, {r['variants']} variants, {r['elapsed']:.0f} s")

    def test_criterion_2_leaf_model_soundness(self, verdict):
        """Stored max error bounds every record's prediction error; mean never exceeds max."""
        rng = np.random.default_rng(2024)
        violations = 0
        for t in range(1000):
            k = int(rng.integers(1, 4097))
            d = int(rng.integers(2, 4))
            shape = t % 4
            if shape == 0:
                pts = rng.random((k, d))
            elif shape == 1:
                pts = rng.lognormal(size=(k, d))
            elif shape == 2:
                pts = np.round(rng.normal(size=(k, d)) * 4) / 4  # heavy duplication
            else:
                pts = np.cumsum(rng.exponential(size=(k, d)), axis=0)
            leaf = build_leaf(pts.astype(np.float32), strategy=SearchStrategy(t % 3))
            keys = leaf.key_values().astype(np.float64)
            a, b = two_point_fit(keys)
            pred = np.array([predict_position(a, b, v, k) for v in keys])
            err = np.abs(pred - np.arange(k))
            violations += int(err.max() > leaf.stats.max_err)
            violations += int(leaf.stats.mean_err > leaf.stats.max_err)
            violations += int(not np.all(np.diff(keys) >= 0))
        verdict(2, violations == 0, f"{violations} violations over 1000 leaves (K up to 4096)")

    def test_criterion_3_strategy_equivalence(self, verdict, exactness_run):
        r = exactness_run
        verdict(3, r["strategy_diffs"] == 0,
                f"{r['strategy_diffs']} differences over {r['strategy_checked']} linear and "
                f"exponential queries vs the binary-search oracle results")


# ---------------------------------------------------------------------------
# criteria 4 to 8: the shared 1M-point sweep
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def big():
    ds = make_dataset("skewed", BIG_N, 2, 7)
    return dict(ds=ds, points=gen_point_queries(ds, SWEEP_QUERIES, 3),
                ranges=gen_range_queries(ds, 1000, RANGE_QUERIES, 11))


@pytest.fixture(scope="module")
def sweep(big):
    """Median pass time for every (variant, capacity) on both workloads."""
    ds = big["ds"]
    point_ms, range_ms = {}, {}
    for fam, learned in VARIANTS:
        for cap in bench.DEFAULT_CAPACITIES:
            cfg = BuildConfig(fam, learned, cap)
            tree = build(ds.points, cfg=cfg)
            rp = bench.run_benchmark(ds, cfg, big["points"], repeats=3, tree=tree,
                                     collect_stats=False)
            rr = bench.run_benchmark(ds, cfg, big["ranges"], repeats=3, tree=tree,
                                     collect_stats=False)
            point_ms[fam, learned, cap] = median_ms(rp)
            range_ms[fam, learned, cap] = median_ms(rr)
            del tree

    def argmin(table, fam, learned):
        return min(bench.DEFAULT_CAPACITIES, key=lambda c: table[fam, learned, c])

    tuned = {(f, l): argmin(point_ms, f, l) for f, l in VARIANTS}
    tuned_range = {(f, l): argmin(range_ms, f, l) for f, l in VARIANTS}
    return dict(point_ms=point_ms, range_ms=range_ms, tuned=tuned, tuned_range=tuned_range)


def timed_median(ds, cfg, wl, threads=1):
    """Median of MEDIAN_RUNS independent passes on one built tree."""
    tree = build(ds.points, cfg=cfg)
    rep = bench.run_benchmark(ds, cfg, wl, threads=threads, repeats=MEDIAN_RUNS, tree=tree,
                              collect_stats=False)
    return rep


class TestPerformance:
    def test_criterion_4_footprint(self, verdict, big):
        pts = big["ds"].points
        plain = bench.measure_footprint(build(pts, family="rtree", leaf_capacity=16))
        learned = bench.measure_footprint(build(pts, family="rtree", learned=True,
                                                leaf_capacity=512))
        ratio = learned / plain
        verdict(4, ratio < 0.10, f"IF-RTree@512 {learned} B / RTree@16 {plain} B = {ratio:.4f}")

    def test_criterion_5_tuning_shape(self, verdict, sweep):
        tuned = sweep["tuned"]
        parts, ok = [], True
        for fam in Family:
            plain, learned = tuned[fam, False], tuned[fam, True]
            ok &= learned > plain
            parts.append(f"{label(fam, True)} {learned} vs {label(fam, False)} {plain}")
        verdict(5, ok, "; ".join(parts))

    def test_criterion_6_point_speedup(self, verdict, big, sweep):
        tuned = sweep["tuned"]
        ds, wl = big["ds"], big["points"]
        plain = timed_median(ds, BuildConfig("rtree", False, tuned[Family.RTREE, False]), wl)
        learned = timed_median(ds, BuildConfig("rtree", True, tuned[Family.RTREE, True]), wl)
        skew = median_ms(plain) / median_ms(learned)

        osm = fixture("osm_standin_2d")
        owl = gen_point_queries(osm, SWEEP_QUERIES, 4)
        caps = {}
        for learned_flag in (False, True):
            times = {}
            for cap in bench.DEFAULT_CAPACITIES:
                cfg = BuildConfig("rtree", learned_flag, cap)
                times[cap] = median_ms(bench.run_benchmark(osm, cfg, owl, repeats=3,
                                                           collect_stats=False))
            caps[learned_flag] = min(times, key=times.get)
        o_plain = timed_median(osm, BuildConfig("rtree", False, caps[False]), owl)
        o_learned = timed_median(osm, BuildConfig("rtree", True, caps[True]), owl)
        osm_ratio = median_ms(o_plain) / median_ms(o_learned)
        ok = skew >= 1.2 and osm_ratio >= 1.2
        verdict(6, ok, f"skewed 1M: RTree@{tuned[Family.RTREE, False]} / "
                       f"IF-RTree@{tuned[Family.RTREE, True]} = {skew:.2f}x; "
                       f"osm fixture: RTree@{caps[False]} / IF-RTree@{caps[True]} = {osm_ratio:.2f}x")

    def test_criterion_7_thread_scaling(self, verdict, big, sweep):
        cap = sweep["tuned"][Family.RTREE, True]
        ds, wl = big["ds"], big["points"]
        cfg = BuildConfig("rtree", True, cap)
        tree = build(ds.points, cfg=cfg)
        one = bench.run_benchmark(ds, cfg, wl, threads=1, repeats=MEDIAN_RUNS, tree=tree,
                                  collect_stats=False)
        four = bench.run_benchmark(ds, cfg, wl, threads=4, repeats=MEDIAN_RUNS, tree=tree,
                                   collect_stats=False)
        ratio = (len(wl) / median_ms(four)) / (len(wl) / median_ms(one))
        cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
        verdict(7, ratio >= 2.5, f"IF-RTree@{cap} throughput 4 threads / 1 thread = {ratio:.2f}x "
                                 f"on {cores} available core(s)")

    def test_criterion_8_range_speedup(self, verdict, big, sweep):
        tuned = sweep["tuned_range"]
        ds, wl = big["ds"], big["ranges"]
        parts, ok = [], True
        for fam in Family:
            plain = timed_median(ds, BuildConfig(fam, False, tuned[fam, False]), wl)
            learned = timed_median(ds, BuildConfig(fam, True, tuned[fam, True]), wl)
            ratio = median_ms(plain) / median_ms(learned)
            ok &= ratio > 1.0
            parts.append(f"{label(fam, False)}@{tuned[fam, False]} / "
                         f"{label(fam, True)}@{tuned[fam, True]} = {ratio:.2f}x")
        verdict(8, ok, "sigma=1000: " + "; ".join(parts))


# ---------------------------------------------------------------------------
# criterion 9: determinism across processes
# ---------------------------------------------------------------------------

def _cli(*args):
    return subprocess.run([sys.executable, "-m", "ifindex", *map(str, args)],
                          check=True, capture_output=True, text=True)


class TestDeterminism:
    def test_criterion_9_determinism(self, verdict, tmp_path):
        files, checksums = [], []
        for run in range(2):
            data = tmp_path / f"data{run}.ifxd"
            wl = tmp_path / f"wl{run}.ifxw"
            report = tmp_path / f"r{run}.csv"
            _cli("gen-data", "--kind", "skewed", "--n", 50_000, "--seed", 21, "--out", data)
            _cli("gen-workload", "--data", data, "--kind", "range", "--sigma", 100,
                 "--queries", 500, "--seed", 22, "--out", wl)
            out = _cli("bench", "--data", data, "--workload", wl, "--learned",
                       "--family", "kdtree", "--leaf-capacity", 256, "--repeats", 1,
                       "--out", report).stdout
            files.append((data.read_bytes(), wl.read_bytes()))
            checksums.append(out.split("checksum=")[1].split()[0])
        # in-process digests of a point workload built twice from the same seed
        ds = make_dataset("gaussian", 20_000, 3, 23)
        digests = []
        for _ in range(2):
            wl = gen_point_queries(ds, 2000, 24)
            tree = build(ds.points, family="quadtree", learned=True, leaf_capacity=64)
            digests.append(point_digest(tree, wl.queries))
        ok = (files[0] == files[1] and checksums[0] == checksums[1]
              and np.array_equal(digests[0], digests[1]))
        verdict(9, ok, f"data and workload files byte-identical: {files[0] == files[1]}; "
                       f"checksums {checksums[0]} / {checksums[1]}")
