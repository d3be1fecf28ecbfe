import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ifindex.geometry import MBR
from ifindex.leaf_model import (ErrorStats, LeafModel, SearchStrategy, build_leaf, check_leaf,
                                choose_storage_dim, eval_errors, fit_linear, leaf_find_first,
                                leaf_point_query, leaf_range_query, predict)
from oracles import (lower_bound, position_errors, predict_position, scan_point, scan_range,
                     two_point_fit)

STRATEGIES = list(SearchStrategy)

# small value alphabet so generated leaves contain plenty of ties
tie_coords = st.sampled_from([0.0, 0.25, 0.5, 1.0, 1.5, 3.0, 7.0, 100.0, -2.0])
leaf_points = arrays(np.float32, st.tuples(st.integers(1, 60), st.integers(2, 3)),
                     elements=st.one_of(tie_coords, st.floats(-50, 50, width=32)))


def uniform_leaf_values():
    return np.arange(100) / 99.0


class TestFitLinear:
    def test_exact_linear(self):
        m = fit_linear(uniform_leaf_values())
        assert m.A == pytest.approx(99.0)
        assert m.B == pytest.approx(0.0, abs=1e-12)

    def test_degenerate(self):
        m = fit_linear(np.full(10, 7.0))
        assert (m.A, m.B) == (0.0, 0.0)
        assert {predict(m, v, 10) for v in (-1e9, 0.0, 7.0, 1e9)} == {0}

    def test_against_two_point_oracle(self):
        vals = np.sort(np.random.default_rng(8).normal(size=1024))
        a, b = two_point_fit(vals)
        m = fit_linear(vals)
        assert m.A == pytest.approx(a, rel=1e-12)
        assert m.B == pytest.approx(b, rel=1e-12, abs=1e-12)

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            fit_linear([1.0, 0.0])


class TestPredict:
    def test_round_half_up(self):
        assert predict(LeafModel(99.0, 0.0), 0.5, 100) == 50

    def test_clamped(self):
        m = LeafModel(99.0, 0.0)
        assert predict(m, -3.0, 100) == 0
        assert predict(m, 3.0, 100) == 99

    @given(st.floats(0, 1e4), st.floats(-1e4, 1e4), st.floats(-1e3, 1e3), st.integers(1, 5000))
    def test_matches_formula(self, a, b, v, k):
        assert predict(LeafModel(a, b), v, k) == predict_position(a, b, v, k)


class TestEvalErrors:
    def test_uniform_is_exact(self):
        vals = uniform_leaf_values()
        assert eval_errors(fit_linear(vals), vals) == ErrorStats(0, 0.0)

    def test_hand_checked_leaf(self):
        """{0, 0.1, 0.2, 10}: predictions {0, 0, 0, 3}, so errors {0, 1, 2, 0}."""
        vals = [0.0, 0.1, 0.2, 10.0]
        m = fit_linear(vals)
        assert m.A == pytest.approx(0.3) and m.B == 0.0
        assert [predict(m, v, 4) for v in vals] == [0, 0, 0, 3]
        e = eval_errors(m, vals)
        assert e.max_err == 2
        assert e.mean_err == pytest.approx(0.75)
        assert (e.max_err, e.mean_err) == pytest.approx(position_errors(vals))

    @given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e3, 1e3)))
    def test_against_oracle(self, vals):
        vals = np.sort(vals)
        e = eval_errors(fit_linear(vals), vals)
        mx, mn = position_errors(vals)
        assert e.max_err == mx
        assert e.mean_err == pytest.approx(mn)
        assert e.mean_err <= e.max_err


class TestChooseStorageDim:
    def test_degenerate_dimension_loses(self):
        pts = np.column_stack([np.arange(64) / 63.0, np.full(64, 3.0)])
        pdim, per_dim = choose_storage_dim(pts)
        assert pdim == 0
        assert per_dim[0] == ErrorStats(0, 0.0)
        assert per_dim[1].max_err == 63  # constant key: every record predicted at 0

    def test_per_dim_errors_match_oracle(self):
        pts = np.random.default_rng(2).gamma(1.5, size=(300, 3)).astype(np.float32)
        _, per_dim = choose_storage_dim(pts)
        for k, e in enumerate(per_dim):
            mx, mn = position_errors(np.sort(pts[:, k].astype(np.float64)))
            assert e.max_err == mx and e.mean_err == pytest.approx(mn)

    def test_uniform_dimension_beats_clustered(self):
        """A near-uniform coordinate is preferred over one piled up in a few clusters."""
        rng = np.random.default_rng(4)
        lat = rng.uniform(40.0, 41.0, 2048)
        lon = np.concatenate([rng.normal(-74.0, 0.01, 1800), rng.uniform(-75, -73, 248)])
        pts = np.column_stack([lon, lat]).astype(np.float32)
        for s in STRATEGIES:
            assert choose_storage_dim(pts, s)[0] == 1

    def test_binary_uses_max_linear_uses_mean(self):
        # dim 0: exact except one run of 20 equal keys (max 10, mean 0.5)
        # dim 1: small jitter everywhere (max 3, mean ~0.9)
        k = 200
        d0 = np.arange(k, dtype=float)
        d0[90:110] = 100.0
        d1 = np.sort(np.arange(k) + np.random.default_rng(0).uniform(-3, 3, k))
        pts = np.column_stack([d0, d1])
        _, per_dim = choose_storage_dim(pts)
        assert per_dim[0] == ErrorStats(10, 0.5)
        assert per_dim[1].max_err == 3 and per_dim[1].mean_err > 0.5
        assert choose_storage_dim(pts, "binary")[0] == 1
        assert choose_storage_dim(pts, "linear")[0] == 0
        assert choose_storage_dim(pts, "exponential")[0] == 0

    def test_relabeling_symmetry(self):
        rng = np.random.default_rng(10)
        pts = rng.random((500, 2)).astype(np.float32)
        pts[:, 1] = pts[:, 1] ** 3  # make the dims distinguishable
        a = choose_storage_dim(pts)[0]
        b = choose_storage_dim(pts[:, ::-1])[0]
        assert a == 1 - b

    def test_ties_go_to_lowest_dim(self):
        pts = np.column_stack([np.arange(10.0), np.arange(10.0), np.arange(10.0)])
        assert choose_storage_dim(pts)[0] == 0


class TestBuildLeaf:
    def test_sort_semantics(self):
        pts = np.array([[3, 0], [1, 5], [2, 0], [1, 2]], np.float32)
        leaf = build_leaf(pts)
        # dim 0 here has error stats no worse than dim 1, so it is chosen
        assert leaf.pdim == 0 and leaf.sdim == 1
        np.testing.assert_array_equal(leaf.key_values(), [1, 1, 2, 3])
        np.testing.assert_array_equal(leaf.records[:2], [[1, 2], [1, 5]])
        np.testing.assert_array_equal(leaf.payload, [3, 1, 2, 0])

    def test_random_leaf_invariants(self):
        pts = np.random.default_rng(3).normal(size=(1024, 3)).astype(np.float32)
        check_leaf(build_leaf(pts))

    def test_large_leaf(self):
        pts = np.random.default_rng(3).random((2048, 2)).astype(np.float32)
        leaf = build_leaf(pts)
        assert leaf.K == 2048
        check_leaf(leaf)

    def test_single_record(self):
        leaf = build_leaf([[1.0, 2.0]], payload=[42])
        assert leaf.stats == ErrorStats(0, 0.0)
        assert leaf_point_query(leaf, (1.0, 2.0)) == {42}

    def test_payload_travels_with_record(self):
        pts = np.random.default_rng(1).random((100, 2)).astype(np.float32)
        leaf = build_leaf(pts, payload=np.arange(100) * 10)
        for rec, pid in zip(leaf.records, leaf.payload):
            np.testing.assert_array_equal(rec, pts[pid // 10])

    def test_errors(self):
        with pytest.raises(ValueError):
            build_leaf(np.empty((0, 2)))
        with pytest.raises(ValueError):
            build_leaf(np.zeros((3, 2)), payload=[1, 2])

    @given(leaf_points, st.sampled_from(STRATEGIES))
    def test_invariants_property(self, pts, strategy):
        leaf = build_leaf(pts, strategy=strategy)
        check_leaf(leaf)
        mx, mn = position_errors(leaf.key_values().astype(np.float64))
        assert leaf.stats.max_err == mx
        assert leaf.stats.mean_err == pytest.approx(mn)


class TestFindFirst:
    def test_exact_position(self):
        vals = uniform_leaf_values()
        leaf = build_leaf(np.column_stack([vals, np.zeros(100)]))
        v = np.float32(vals[50])
        for s in STRATEGIES:
            assert leaf_find_first(leaf, v, s) == 50

    def test_boundaries(self):
        leaf = build_leaf(np.column_stack([np.arange(10.0), np.zeros(10)]))
        for s in STRATEGIES:
            assert leaf_find_first(leaf, -5.0, s, range_mode=True) == 0
            assert leaf_find_first(leaf, 50.0, s, range_mode=True) is None
            assert leaf_find_first(leaf, 2.5, s) is None
            assert leaf_find_first(leaf, 2.5, s, range_mode=True) == 3

    @given(leaf_points, st.sampled_from(STRATEGIES), st.data())
    def test_matches_lower_bound_oracle(self, pts, strategy, data):
        leaf = build_leaf(pts, strategy=strategy)
        keys = leaf.key_values().tolist()
        stored = data.draw(st.sampled_from(keys))
        probe = data.draw(st.one_of(st.just(stored), st.floats(-100, 200, width=32)))
        expect = lower_bound(keys, probe)
        got = leaf_find_first(leaf, probe, strategy, range_mode=True)
        assert got == (None if expect == len(keys) else expect)
        exact = leaf_find_first(leaf, stored, strategy)
        assert exact == lower_bound(keys, stored)


class TestLeafQueries:
    def test_duplicates_all_returned(self):
        pts = np.array([[1, 1], [2, 2], [1, 1], [1, 3], [1, 1]], np.float32)
        leaf = build_leaf(pts)
        for s in STRATEGIES:
            assert leaf_point_query(leaf, (1, 1), s) == {0, 2, 4}
            assert leaf_point_query(leaf, (1, 2), s) == set()  # key present, tuple absent

    def test_whole_leaf_box(self):
        pts = np.random.default_rng(0).random((77, 2)).astype(np.float32)
        leaf = build_leaf(pts)
        assert leaf_range_query(leaf, MBR.from_intervals([(0, 1), (0, 1)])) == set(range(77))

    def test_disjoint_box_touches_few_records(self):
        """A box left or right of the key range costs the bounded search plus at most one scan step."""
        pts = np.random.default_rng(0).exponential(size=(512, 2)).astype(np.float32)
        leaf = build_leaf(pts)
        p, delta = leaf.pdim, leaf.stats.max_err
        lo_key, hi_key = float(leaf.key_values()[0]), float(leaf.key_values()[-1])
        other = [(-1e9, 1e9)]
        for iv in ((hi_key + 1, hi_key + 2), (lo_key - 2, lo_key - 1)):
            ivs = [iv, other[0]] if p == 0 else [other[0], iv]
            stats = np.zeros(3, np.int64)
            assert leaf_range_query(leaf, MBR.from_intervals(ivs), stats=stats) == set()
            search = int(np.ceil(np.log2(2 * delta + 2)))
            assert stats[2] <= search + 1 <= delta + 2

    @given(leaf_points, st.sampled_from(STRATEGIES), st.data())
    def test_queries_match_scan(self, pts, strategy, data):
        leaf = build_leaf(pts, strategy=strategy)
        orig = np.empty_like(leaf.records)
        orig[leaf.payload] = leaf.records
        q = orig[data.draw(st.integers(0, len(orig) - 1))]
        assert leaf_point_query(leaf, q, strategy) == scan_point(orig, q)
        a = data.draw(arrays(np.float32, orig.shape[1], elements=st.floats(-60, 60, width=32)))
        b = data.draw(arrays(np.float32, orig.shape[1], elements=st.floats(-60, 60, width=32)))
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        assert leaf_range_query(leaf, MBR(lo, hi), strategy) == scan_range(orig, lo, hi)

    def test_random_boxes_on_random_leaves(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            k = int(rng.integers(1, 300))
            pts = np.round(rng.normal(size=(k, 2)) * 4) / 4
            pts = pts.astype(np.float32)
            leaf = build_leaf(pts)
            c = rng.normal(size=2)
            w = rng.exponential(0.7, size=2)
            lo, hi = (c - w).astype(np.float32), (c + w).astype(np.float32)
            assert leaf_range_query(leaf, MBR(lo, hi)) == scan_range(pts, lo, hi)
