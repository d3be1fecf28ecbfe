"""Point, MBR and range-query value types.

Coordinates are held as single-precision floats. All intervals are closed:
a point lying exactly on a box boundary is inside the box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

COORD_DTYPE = np.float32
SUPPORTED_DIMS = (2, 3)


def as_points(pts, d: int | None = None) -> np.ndarray:
    """Coerce input to a contiguous ``(n, d)`` float32 array of finite values.

    Raises ``ValueError`` on non-finite coordinates or a dimensionality that
    does not match ``d``.
    """
    arr = np.ascontiguousarray(np.asarray(pts, dtype=COORD_DTYPE))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, d or 0)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array of points, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"expected {d}-dimensional points, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinate in point data")
    return arr


def as_point(p, d: int | None = None) -> np.ndarray:
    arr = np.asarray(p, dtype=COORD_DTYPE).reshape(-1)
    if d is not None and arr.shape[0] != d:
        raise ValueError(f"expected a {d}-dimensional point, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinate in point")
    return arr


@dataclass(frozen=True)
class MBR:
    """Axis-aligned bounding box with per-dimension minima ``lo`` and maxima ``hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_point(self.lo)
        hi = as_point(self.hi, lo.shape[0])
        if np.any(lo > hi):
            raise ValueError(f"MBR lower corner {lo} exceeds upper corner {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self) -> int:
        return self.lo.shape[0]

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence[float]]) -> "MBR":
        intervals = [tuple(iv) for iv in intervals]
        return cls(np.array([iv[0] for iv in intervals]), np.array([iv[1] for iv in intervals]))

    def intervals(self) -> list[tuple[float, float]]:
        return [(float(l), float(u)) for l, u in zip(self.lo, self.hi)]

    def __eq__(self, other):
        if not isinstance(other, MBR):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        return f"MBR({self.intervals()})"


class RangeQuery(MBR):
    """Closed query box ``[(l_0, u_0), ..., (l_{d-1}, u_{d-1})]``.

    Structurally an MBR; kept as its own type so call sites read naturally.
    """

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return self.intervals()

    @classmethod
    def from_mbr(cls, m: MBR) -> "RangeQuery":
        return cls(m.lo, m.hi)

    @classmethod
    def around(cls, p) -> "RangeQuery":
        """Zero-extent box at ``p``; executing it is equivalent to a point query."""
        p = as_point(p)
        return cls(p, p)

    def __repr__(self):
        return f"RangeQuery({self.intervals()})"


def _check_dims(a: MBR, d: int):
    if a.d != d:
        raise ValueError(f"dimensionality mismatch: {a.d} vs {d}")


def mbr_contains_point(m: MBR, p) -> bool:
    p = as_point(p)
    _check_dims(m, p.shape[0])
    return bool(np.all(m.lo <= p) and np.all(p <= m.hi))


def mbr_intersects(m: MBR, q: MBR) -> bool:
    _check_dims(m, q.d)
    return bool(np.all(m.lo <= q.hi) and np.all(q.lo <= m.hi))


def mbr_contains_mbr(outer: MBR, inner: MBR) -> bool:
    _check_dims(outer, inner.d)
    return bool(np.all(outer.lo <= inner.lo) and np.all(inner.hi <= outer.hi))


def mbr_of_points(pts) -> MBR:
    """Tight envelope of a non-empty point set."""
    arr = as_points(pts)
    if arr.shape[0] == 0:
        raise ValueError("cannot compute the MBR of an empty point set")
    return MBR(arr.min(axis=0), arr.max(axis=0))
