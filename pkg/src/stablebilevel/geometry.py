"""Sets, norms and point-to-set distances.

Vectors are plain tuples of floats.  Three set kinds cover the data of a
problem: finite point lists, closed interval boxes (endpoints may be
infinite) and finite unions of boxes for disjunctive constraints.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

Vector = tuple

__all__ = [
    "Norm",
    "FinitePoints",
    "IntervalBox",
    "UnionOfBoxes",
    "SetSpec",
    "GridSpec",
    "DimensionError",
    "norm_of",
    "contains",
    "distance",
    "min_norm_correction",
    "grid_points",
    "set_dim",
]


class DimensionError(ValueError):
    pass


class Norm(enum.Enum):
    L1 = "L1"
    L2 = "L2"
    LINF = "LINF"

    @classmethod
    def parse(cls, tag: str) -> "Norm":
        try:
            return cls(str(tag).upper())
        except ValueError:
            raise ValueError(f"unknown norm tag {tag!r}; expected one of L1, L2, LINF") from None


def norm_of(v: Sequence[float], norm: Norm) -> float:
    if norm is Norm.L1:
        return math.fsum(abs(a) for a in v)
    if norm is Norm.L2:
        return math.hypot(*v) if len(v) else 0.0
    return max((abs(a) for a in v), default=0.0)


@dataclass(frozen=True)
class FinitePoints:
    points: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.points)
        if not pts:
            raise ValueError("finite point set must be nonempty")
        d = len(pts[0])
        if any(len(p) != d for p in pts):
            raise DimensionError("points of a finite set must share one dimension")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return len(self.points[0])


@dataclass(frozen=True)
class IntervalBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(a) for a in self.lower)
        hi = tuple(float(b) for b in self.upper)
        if len(lo) != len(hi):
            raise DimensionError("lower and upper bounds differ in length")
        for j, (a, b) in enumerate(zip(lo, hi)):
            if math.isnan(a) or math.isnan(b):
                raise ValueError(f"interval {j} has a NaN endpoint")
            if a > b:
                raise ValueError(f"interval {j} is empty: [{a}, {b}]")
            if a == math.inf or b == -math.inf:
                raise ValueError(f"interval {j} is empty: [{a}, {b}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_intervals(cls, intervals) -> "IntervalBox":
        intervals = list(intervals)
        return cls(tuple(a for a, _ in intervals), tuple(b for _, b in intervals))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def is_bounded(self) -> bool:
        return all(math.isfinite(a) for a in self.lower + self.upper)


@dataclass(frozen=True)
class UnionOfBoxes:
    boxes: tuple

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if not boxes:
            raise ValueError("a union must contain at least one box")
        d = boxes[0].dim
        if any(b.dim != d for b in boxes):
            raise DimensionError("boxes of a union must share one dimension")
        object.__setattr__(self, "boxes", boxes)

    @property
    def dim(self) -> int:
        return self.boxes[0].dim


SetSpec = Union[FinitePoints, IntervalBox, UnionOfBoxes]


@dataclass(frozen=True)
class GridSpec:
    """Points per axis used to discretize a bounded box."""

    resolution: tuple

    def __post_init__(self):
        res = tuple(int(r) for r in self.resolution)
        if any(r < 2 for r in res):
            raise ValueError("grid resolution must be at least 2 per axis")
        object.__setattr__(self, "resolution", res)


def set_dim(s: SetSpec) -> int:
    return s.dim


def _check_dim(s: SetSpec, point) -> None:
    if len(point) != s.dim:
        raise DimensionError(f"point has dimension {len(point)}, set has {s.dim}")


def _box_contains(box: IntervalBox, point) -> bool:
    return all(a <= p <= b for p, a, b in zip(point, box.lower, box.upper))


def contains(s: SetSpec, point) -> bool:
    """Exact membership test."""
    _check_dim(s, point)
    if isinstance(s, IntervalBox):
        return _box_contains(s, point)
    if isinstance(s, UnionOfBoxes):
        return any(_box_contains(b, point) for b in s.boxes)
    p = tuple(float(c) for c in point)
    return p in s.points


def _box_correction(box: IntervalBox, point) -> tuple:
    # clamping is optimal for every absolute norm (L1, L2, LINF)
    return tuple(min(max(p, a), b) - p for p, a, b in zip(point, box.lower, box.upper))


def _candidates(s: SetSpec, point):
    """Yield candidate corrections in tie-break order."""
    if isinstance(s, IntervalBox):
        yield _box_correction(s, point)
    elif isinstance(s, UnionOfBoxes):
        for b in s.boxes:
            yield _box_correction(b, point)
    else:
        for q in s.points:
            yield tuple(qc - pc for qc, pc in zip(q, point))


def min_norm_correction(point, s: SetSpec, norm: Norm) -> tuple:
    """Smallest ``u`` (in ``norm``) with ``point + u`` in ``s``.

    Ties go to the first union member / finite point in declaration order.
    """
    _check_dim(s, point)
    best = None
    best_len = math.inf
    for u in _candidates(s, point):
        length = norm_of(u, norm)
        if length < best_len:
            best, best_len = u, length
    return best


def distance(point, s: SetSpec, norm: Norm) -> float:
    """``inf`` over ``s`` of ``norm(point - a)``, computed in closed form."""
    _check_dim(s, point)
    return min(norm_of(u, norm) for u in _candidates(s, point))


def grid_points(box: IntervalBox, grid: GridSpec) -> list[tuple]:
    """Uniform lexicographic grid over a bounded box, endpoints included."""
    if not box.is_bounded:
        raise ValueError("cannot grid a box with an infinite interval")
    if len(grid.resolution) != box.dim:
        raise DimensionError("grid resolution does not match box dimension")
    axes = []
    for a, b, r in zip(box.lower, box.upper, grid.resolution):
        ax = np.linspace(a, b, r)
        ax[0], ax[-1] = a, b
        axes.append([float(t) for t in ax])
    return [tuple(p) for p in itertools.product(*axes)]
