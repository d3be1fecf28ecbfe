import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ifindex.geometry import (MBR, RangeQuery, as_point, as_points, mbr_contains_mbr,
                              mbr_contains_point, mbr_intersects, mbr_of_points)

UNIT = MBR.from_intervals([(0, 1), (0, 1)])

coords = st.floats(-1e6, 1e6, allow_nan=False, width=32)


def boxes(d=2):
    return st.lists(st.tuples(coords, coords), min_size=d, max_size=d).map(
        lambda ivs: MBR.from_intervals([sorted(iv) for iv in ivs]))


class TestContainsPoint:
    """Closed-interval semantics on every face."""

    @pytest.mark.parametrize("p, expected", [((0, 0), True), ((2, 0), False), ((1, 1), True),
                                             ((0.5, 1.0000001), False)])
    def test_cases(self, p, expected):
        assert mbr_contains_point(UNIT, p) is expected

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mbr_contains_point(UNIT, (0, 0, 0))


class TestIntersects:
    @pytest.mark.parametrize("q, expected", [
        ([(1, 2), (0, 1)], True),   # touching edges intersect
        ([(2, 3), (0, 1)], False),
        ([(0.25, 0.5), (0.25, 0.5)], True),
    ])
    def test_cases(self, q, expected):
        assert mbr_intersects(UNIT, MBR.from_intervals(q)) is expected

    def test_containment(self):
        big = MBR.from_intervals([(0, 4), (0, 4)])
        small = MBR.from_intervals([(1, 2), (1, 2)])
        assert mbr_intersects(big, small)
        assert mbr_contains_mbr(big, small)
        assert not mbr_contains_mbr(small, big)

    @given(boxes(), boxes())
    def test_symmetric(self, a, b):
        assert mbr_intersects(a, b) == mbr_intersects(b, a)

    @given(boxes(), boxes())
    def test_containment_implies_intersection(self, a, b):
        if mbr_contains_mbr(a, b):
            assert mbr_intersects(a, b)


class TestMbrOfPoints:
    def test_two_points(self):
        assert mbr_of_points([(0, 0), (2, 1)]) == MBR.from_intervals([(0, 2), (0, 1)])

    def test_degenerate(self):
        m = mbr_of_points([(5, 5)])
        assert m == MBR.from_intervals([(5, 5), (5, 5)])

    def test_against_fold(self):
        """Envelope equals a plain Python fold of min/max."""
        pts = np.random.default_rng(5).normal(size=(100, 3)).astype(np.float32)
        lo = [min(p[k] for p in pts.tolist()) for k in range(3)]
        hi = [max(p[k] for p in pts.tolist()) for k in range(3)]
        m = mbr_of_points(pts)
        np.testing.assert_array_equal(m.lo, np.array(lo, np.float32))
        np.testing.assert_array_equal(m.hi, np.array(hi, np.float32))

    @given(arrays(np.float32, st.tuples(st.integers(1, 40), st.integers(2, 3)), elements=coords))
    def test_contains_every_point(self, pts):
        m = mbr_of_points(pts)
        assert all(mbr_contains_point(m, p) for p in pts)

    def test_empty(self):
        with pytest.raises(ValueError):
            mbr_of_points(np.empty((0, 2)))


class TestValidation:
    def test_inverted_box(self):
        with pytest.raises(ValueError):
            MBR(np.array([1.0, 0.0]), np.array([0.0, 1.0]))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            as_points([[0.0, np.nan]])
        with pytest.raises(ValueError):
            as_point([np.inf, 0.0])

    def test_wrong_dims(self):
        with pytest.raises(ValueError):
            as_points(np.zeros((3, 2)), d=3)

    def test_frozen_corners(self):
        with pytest.raises(ValueError):
            UNIT.lo[0] = 5

    def test_hash_and_eq(self):
        a = MBR.from_intervals([(0, 1), (2, 3)])
        b = MBR(np.array([0, 2]), np.array([1, 3]))
        assert a == b and hash(a) == hash(b)

    def test_range_query_around(self):
        q = RangeQuery.around((1.5, 2.5))
        assert q.bounds == [(1.5, 1.5), (2.5, 2.5)]
        assert RangeQuery.from_mbr(UNIT) == UNIT
