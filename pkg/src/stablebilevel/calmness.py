"""Calmness of the lower-level value function on finite ``Y``.

Calmness at ``x`` with threshold ``lam`` is equivalent to exactness of the
penalized lower-level problem, ``mu(x, lam) == V(x, 0)``.  On a finite
``Y`` that equality is a comparison of two enumerable minima, so it is
certified directly instead of sampling perturbations ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .geometry import contains
from .lowerlevel import penalty_value_mu, value_function_V

__all__ = [
    "CALM",
    "NOT_CALM",
    "INCONCLUSIVE",
    "CalmnessCertificate",
    "LocalCalmnessCertificate",
    "DEFAULT_LADDER",
    "certify_calm_at",
    "finite_threshold",
    "sufficient_constants",
    "certify_local_calm",
]

CALM = "calm"
NOT_CALM = "not-calm"
INCONCLUSIVE = "inconclusive"
TOL = 1e-9

DEFAULT_LADDER = (0.0,) + tuple(10.0 ** (k / 4) for k in range(-12, 25))


@dataclass(frozen=True)
class CalmnessCertificate:
    """Outcome of a ladder search at one point.

    ``threshold`` is the smallest ladder value that made the penalty exact
    when ``status == "calm"``, and the largest value tried otherwise.
    """

    x: tuple
    status: str
    threshold: Optional[float]
    gap: float
    ladder: tuple = field(repr=False, default=())

    @property
    def calm(self) -> bool:
        return self.status == CALM

    def to_dict(self) -> dict:
        return {"x": list(self.x), "status": self.status, "threshold": self.threshold, "gap": self.gap}


@dataclass(frozen=True)
class LocalCalmnessCertificate:
    x_bar: tuple
    rho: float
    status: str
    threshold: Optional[float]
    samples: tuple
    gaps: tuple
    pointwise: tuple = field(repr=False, default=())

    @property
    def calm(self) -> bool:
        return self.status == CALM

    def to_dict(self) -> dict:
        return {
            "x_bar": list(self.x_bar),
            "rho": self.rho,
            "status": self.status,
            "threshold": self.threshold,
            "samples": [list(s) for s in self.samples],
            "gaps": list(self.gaps),
        }


def _gap(v: float, mu: float) -> float:
    if v == math.inf:
        return math.inf
    return v - mu


def certify_calm_at(problem, x, lambda_ladder: Sequence[float] = DEFAULT_LADDER, tol: float = TOL) -> CalmnessCertificate:
    """Smallest ladder ``lam`` with ``V(x, 0) - mu(x, lam) <= tol``."""
    x = tuple(float(a) for a in x)
    ladder = tuple(float(l) for l in lambda_ladder)
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("lambda ladder must be strictly increasing")
    if not ladder:
        return CalmnessCertificate(x, INCONCLUSIVE, None, math.nan, ladder)
    v = value_function_V(problem, x)
    gap = math.inf
    for lam in ladder:
        gap = _gap(v, penalty_value_mu(problem, x, lam))
        if gap <= tol:
            return CalmnessCertificate(x, CALM, lam, gap, ladder)
    return CalmnessCertificate(x, NOT_CALM, ladder[-1], gap, ladder)


def finite_threshold(problem, x) -> float:
    """Exact minimal penalty threshold at ``x`` for finite ``Y``.

    Equals ``max((V(x,0) - g(x,y)) / dist(H(x,y), D))`` over infeasible
    ``y``, clamped at zero; ``inf`` when no ``y`` is feasible.
    """
    x = tuple(float(a) for a in x)
    v = value_function_V(problem, x)
    if v == math.inf:
        return math.inf
    best = 0.0
    for y in problem.Y_points:
        d = problem.dist_at(x, y)
        if d > 0:
            best = max(best, (v - problem.g_at(x, y)) / d)
    return best


def sufficient_constants(problem, x) -> tuple[float, float, float]:
    """Lipschitz and regularity constants ``(k1, k2, k1 * k2)`` at ``x``.

    ``k1`` bounds the variation of ``g(x, .)`` over ``Y`` in the Euclidean
    norm; ``k2`` bounds the Euclidean distance to the feasible set ``S(x)``
    by the constraint residual.  ``k1 * k2`` is a penalty threshold.

    Raises:
        ValueError: if ``S(x)`` is empty.
    """
    x = tuple(float(a) for a in x)
    ys = problem.Y_points
    feasible = [y for y in ys if contains(problem.D, problem.H_at(x, y))]
    if not feasible:
        raise ValueError(f"lower-level feasible set is empty at x={x}")
    k1 = 0.0
    for i, y in enumerate(ys):
        for yp in ys[i + 1:]:
            step = math.dist(y, yp)
            if step > 0:
                k1 = max(k1, abs(problem.g_at(x, y) - problem.g_at(x, yp)) / step)
    k2 = 0.0
    for y in ys:
        d = problem.dist_at(x, y)
        if d > 0:
            to_s = min(math.dist(y, s) for s in feasible)
            k2 = max(k2, to_s / d)
    return k1, k2, k1 * k2


def certify_local_calm(
    problem,
    x_bar,
    rho: float,
    lambda_ladder: Sequence[float] = DEFAULT_LADDER,
    tol: float = TOL,
) -> LocalCalmnessCertificate:
    """Certify calmness at every ``X``-grid point in the Euclidean ball ``B(x_bar, rho)``.

    Only grid points are sampled, so a pass is evidence for, not a proof
    of, local calmness on the continuous ball.
    """
    x_bar = tuple(float(a) for a in x_bar)
    samples = [x for x in problem.X_points if math.dist(x, x_bar) <= rho * (1 + 1e-12)]
    if not samples:
        raise ValueError(f"no grid point of X within rho={rho} of {x_bar}")
    certs = [certify_calm_at(problem, x, lambda_ladder, tol) for x in samples]
    if all(c.calm for c in certs):
        lam = max(c.threshold for c in certs)
        status = CALM
    else:
        lam = certs[0].ladder[-1] if certs[0].ladder else None
        status = NOT_CALM if all(c.status != INCONCLUSIVE for c in certs) else INCONCLUSIVE
    gaps = []
    for x, c in zip(samples, certs):
        if status == CALM:
            gaps.append(_gap(value_function_V(problem, x), penalty_value_mu(problem, x, lam)))
        else:
            gaps.append(c.gap)
    return LocalCalmnessCertificate(
        x_bar, float(rho), status, lam, tuple(samples), tuple(gaps), tuple(certs)
    )
