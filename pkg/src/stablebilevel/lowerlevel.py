"""Lower-level value functions and bilevel feasibility.

Extended reals are plain floats with ``math.inf`` / ``-math.inf``.  Every
infimum over ``Y`` is an exact enumeration of a finite master list, so
``-inf`` never arises from a real solve; it only shows up as the limit in
:func:`truncation_divergence`.

The functions accept either a :class:`~stablebilevel.model.BilevelProblem`
(exact data) or a :class:`~stablebilevel.model.StabilizedInstance`
(materialized ``g^nu``, ``H^nu``); both expose ``g_at``, ``H_at``,
``dist_at``, ``D`` and ``norm``.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

from .geometry import contains

__all__ = [
    "ext_add",
    "value_function_V",
    "penalty_value_mu",
    "tau_argmin",
    "check_bilevel_feasible",
    "truncation_divergence",
]


def ext_add(a: float, b: float) -> float:
    """Extended-real addition; finite + finite overflowing is an error."""
    s = a + b
    if math.isnan(s):
        raise ArithmeticError(f"undefined extended-real sum {a} + {b}")
    if math.isinf(s) and math.isfinite(a) and math.isfinite(b):
        raise OverflowError(f"finite sum {a} + {b} overflows")
    return s


def value_function_V(data, x, u=None) -> float:
    """``V(x, u) = min{ g(x, y) : y in Y, H(x, y) + u in D }``; ``+inf`` if infeasible."""
    x = tuple(x)
    best = math.inf
    for y in data.Y_points:
        h = data.H_at(x, y)
        if u is not None:
            h = tuple(a + b for a, b in zip(h, u))
        if contains(data.D, h):
            best = min(best, data.g_at(x, y))
    return best


def penalty_value_mu(data, x, lam: float, cutset: Optional[Sequence[tuple]] = None) -> float:
    """``min over cutset of g(x, z) + lam * dist(H(x, z), D)``.

    ``cutset`` defaults to ``Y`` for exact data and ``Y^nu`` for an
    instance.  An empty cutset gives ``+inf``.
    """
    if lam < 0:
        raise ValueError(f"penalty parameter must be nonnegative, got {lam}")
    if cutset is None:
        cutset = data.default_cutset
    x = tuple(x)
    best = math.inf
    for z in cutset:
        v = data.g_at(x, z) + lam * data.dist_at(x, z)
        if v < best:
            best = v
    return best


def tau_argmin(data, x, tau: float) -> list[tuple]:
    """Feasible ``y`` with ``g(x, y) <= V(x, 0) + tau``, in master order."""
    x = tuple(x)
    feasible = [y for y in data.Y_points if contains(data.D, data.H_at(x, y))]
    if not feasible:
        return []
    v = min(data.g_at(x, y) for y in feasible)
    return [y for y in feasible if data.g_at(x, y) <= v + tau]


def check_bilevel_feasible(problem, x, y) -> bool:
    """Whether ``(x, y)`` is feasible for the bilevel problem (optimistic, tolerance ``tau``)."""
    x, y = tuple(float(a) for a in x), tuple(float(b) for b in y)
    if len(x) != problem.n or len(y) != problem.m:
        return False
    if not contains(problem.X, x):
        return False
    if y not in set(problem.Y_points):
        return False
    if not problem.in_domain(x, y):
        return False
    if not contains(problem.D, problem.H_at(x, y)):
        return False
    return problem.g_at(x, y) <= value_function_V(problem, x) + problem.tau


def truncation_divergence(make_problem, radii: Sequence[float], x, lam: float) -> list[dict]:
    """Track ``mu(x, lam)`` and ``V(x, 0)`` over growing truncations ``Y_R``.

    ``make_problem(R)`` must return a problem whose ``Y`` is a grid on
    ``[-R, R]``.  On a compact truncation both values are finite; for a
    noncompact ``Y`` the penalized value can drift to ``-inf`` while ``V``
    stays put.
    """
    rows = []
    for r in radii:
        p = make_problem(r)
        rows.append({
            "R": float(r),
            "mu": penalty_value_mu(p, x, lam),
            "V": value_function_V(p, x),
            "size": len(p.Y_points),
        })
    return rows
