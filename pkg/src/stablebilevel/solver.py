"""Exact desk-scale solution of the lifted problem at fixed ``nu``.

The lifted problem minimizes ``f + sigma*||u|| - theta*alpha`` over
``(x, y, u, alpha, lam)`` subject to ``H(x, y) + u in D``, ``alpha <= 0``,
``0 <= lam <= lambda_bar`` and, for every cut ``z``,

    g(x, y) + alpha <= g(x, z) + lam * dist(H(x, z), D) + tau_nu.

For fixed ``(x, y)`` the remaining variables separate and minimize in
closed form: the objective grows with ``||u||`` and ``-alpha`` while the
cut constraints only loosen as ``lam`` grows, so ``lam = lambda_bar``,
``u`` is the minimal-norm correction of ``H(x, y)`` into ``D`` and
``alpha = min(0, mu + tau_nu - g(x, y))`` with ``mu`` the penalized
lower-level value over the cuts.  Enumerating ``(x, y)`` over the finite
grids then solves the problem exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from .geometry import contains, distance, min_norm_correction, norm_of
from .lowerlevel import penalty_value_mu

__all__ = [
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "SolveRecord",
    "OaIteration",
    "OaTrace",
    "reduced_master_objective",
    "solve_stabilized_full",
    "minimal_lambda",
    "phi_nu_eval",
    "psi_0",
    "psi_z",
    "outer_approximation",
    "construct_feasible_point",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded-diagnostic"
FEAS_TOL = 1e-9

Schedule = Union[None, float, Sequence[float], Callable[[int], float]]


@dataclass(frozen=True)
class SolveRecord:
    status: str
    x: Optional[tuple] = None
    y: Optional[tuple] = None
    u: Optional[tuple] = None
    alpha: Optional[float] = None
    lam: Optional[float] = None
    value: float = math.inf
    breakdown: dict = field(default_factory=dict)
    enumerated: int = 0
    wall_time: float = field(default=0.0, compare=False)
    optimal_set: tuple = ()
    u_norm: Optional[float] = None

    @property
    def w(self) -> tuple:
        return (self.x, self.y, self.u, self.alpha, self.lam)

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else list(v)

        return {
            "status": self.status,
            "x": vec(self.x),
            "y": vec(self.y),
            "u": vec(self.u),
            "alpha": self.alpha,
            "lambda": self.lam,
            "value": self.value,
            "breakdown": dict(self.breakdown),
            "u_norm": self.u_norm,
            "enumerated": self.enumerated,
            "optimal_set": [[list(a), list(b)] for a, b in self.optimal_set],
        }


@dataclass(frozen=True)
class OaIteration:
    k: int
    cut: tuple
    cut_index: int
    new_cut: bool
    master_value: float
    eps: float
    delta: float
    lower_bound: float
    violation: float


@dataclass(frozen=True)
class OaTrace:
    iterations: tuple
    record: SolveRecord
    status: str  # "converged", "max_iter" or "infeasible"
    cutset: tuple

    @property
    def n_iter(self) -> int:
        return len(self.iterations)

    def csv_rows(self) -> list[dict]:
        return [
            {
                "k": it.k,
                "z_k_index": it.cut_index,
                "master_value": it.master_value,
                "lower_bound": it.lower_bound,
                "violation": it.violation,
            }
            for it in self.iterations
        ]

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": [
                {
                    "k": it.k,
                    "cut": list(it.cut),
                    "z_k_index": it.cut_index,
                    "new_cut": it.new_cut,
                    "master_value": it.master_value,
                    "eps": it.eps,
                    "delta": it.delta,
                    "lower_bound": it.lower_bound,
                    "violation": it.violation,
                }
                for it in self.iterations
            ],
            "cutset": [list(z) for z in self.cutset],
            "record": self.record.to_dict(),
        }


def _reduce(instance, x, y, mu_hat):
    """Closed-form ``(value, u, alpha, breakdown)`` for fixed ``(x, y)``."""
    f = instance.f_at(x, y)
    if f == math.inf:
        return math.inf, None, None, None
    u = min_norm_correction(instance.H_at(x, y), instance.D, instance.norm)
    alpha = min(0.0, (mu_hat + instance.tau_nu) - instance.g_at(x, y))
    su = instance.sigma * norm_of(u, instance.norm)
    ta = -instance.theta * alpha
    value = f + su + ta
    return value, u, alpha, {"f": f, "sigma_u": su, "theta_alpha": ta}


def reduced_master_objective(instance, x, y, cutset: Optional[Sequence[tuple]] = None):
    """Partial minimum over ``(u, alpha, lam)`` at fixed ``(x, y)``.

    Returns ``(value, u, alpha, lam)``; ``value`` is ``inf`` (and the rest
    ``None``) when ``(x, y)`` violates the domain constraints.  An empty
    cutset leaves ``alpha = 0``.
    """
    x, y = tuple(x), tuple(y)
    if cutset is None:
        cutset = instance.Y_nu
    mu_hat = penalty_value_mu(instance, x, instance.lambda_bar, cutset)
    value, u, alpha, _ = _reduce(instance, x, y, mu_hat)
    if value == math.inf:
        return math.inf, None, None, None
    return value, u, alpha, instance.lambda_bar


def solve_stabilized_full(
    instance,
    cutset: Optional[Sequence[tuple]] = None,
    minimal_lam: bool = False,
    lambda_ladder: Optional[Sequence[float]] = None,
) -> SolveRecord:
    """Minimize the lifted problem by enumerating ``X``-grid x ``Y``.

    ``cutset`` restricts the cut constraints (defaults to ``Y^nu``); this is
    the master problem of outer approximation.  Exact ties go to the
    lexicographically smallest ``(x, y)``.  With ``minimal_lam`` the
    reported ``lam`` is lowered to the smallest value keeping the
    minimizer feasible; the objective does not change.
    """
    t0 = time.perf_counter()
    if cutset is None:
        cutset = instance.Y_nu
    best = None
    count = 0
    for x in instance.X_points:
        mu_hat = penalty_value_mu(instance, x, instance.lambda_bar, cutset)
        for y in instance.Y_points:
            count += 1
            value, u, alpha, parts = _reduce(instance, x, y, mu_hat)
            if value == math.inf:
                continue
            key = (value, x, y)
            if best is None or key < best[0]:
                best = (key, u, alpha, parts)
    elapsed = time.perf_counter() - t0
    if best is None:
        return SolveRecord(INFEASIBLE, enumerated=count, wall_time=elapsed)
    (value, x, y), u, alpha, parts = best
    lam = instance.lambda_bar
    if minimal_lam:
        lam = minimal_lambda(instance, (x, y, u, alpha, lam), cutset, lambda_ladder)
    return SolveRecord(
        OPTIMAL, x, y, u, alpha, lam, value, parts, count, time.perf_counter() - t0,
        u_norm=norm_of(u, instance.norm),
    )


def minimal_lambda(instance, w, cutset=None, lambda_ladder=None) -> float:
    """Smallest ``lam`` keeping ``w``'s cut constraints satisfied.

    Without a ladder the exact breakpoint ``max(0, (g(x,y) + alpha -
    g(x,z) - tau_nu) / dist(H(x,z), D))`` over cuts with positive distance
    is returned; with one, the smallest ladder value not below it.
    """
    x, y, u, alpha, _ = w
    if cutset is None:
        cutset = instance.Y_nu
    gy = instance.g_at(x, y)
    need = 0.0
    for z in cutset:
        d = instance.dist_at(x, z)
        if d > 0:
            need = max(need, (gy + alpha - instance.g_at(x, z) - instance.tau_nu) / d)
    lam = min(need, instance.lambda_bar)
    if lambda_ladder is not None:
        cands = [l for l in sorted(lambda_ladder) if lam <= l <= instance.lambda_bar]
        lam = cands[0] if cands else instance.lambda_bar
    if max((psi_z(instance, (x, y, u, alpha, lam), z) for z in cutset), default=-math.inf) > FEAS_TOL:
        return instance.lambda_bar
    return lam


def psi_0(instance, w) -> float:
    """Objective ``f + sigma * ||u|| - theta * alpha`` of the lifted problem."""
    x, y, u, alpha, _ = w
    return instance.f_at(x, y) + instance.sigma * norm_of(u, instance.norm) + (-instance.theta * alpha)


def psi_z(instance, w, z) -> float:
    """Residual of the cut constraint indexed by ``z`` (feasible when ``<= 0``)."""
    x, y, _, alpha, lam = w
    return (
        instance.g_at(x, y)
        + alpha
        - instance.g_at(x, z)
        - lam * instance.dist_at(x, z)
        - instance.tau_nu
    )


def _lookup(instance, name, points):
    cache = instance.__dict__.setdefault("_eval_cache", {})
    key = "set:" + name
    if key not in cache:
        cache[key] = frozenset(points)
    return cache[key]


def phi_nu_eval(instance, w, tol: float = FEAS_TOL) -> float:
    """Extended-real objective: ``psi_0(w)`` on the feasible set, ``inf`` off it.

    ``tol`` is the feasibility slack on the ``D``-inclusion and on the
    penalized value-function constraint; simple bounds are checked exactly.
    """
    x, y, u, alpha, lam = w
    x, y, u = tuple(x), tuple(y), tuple(u)
    if x not in _lookup(instance, "X", instance.X_points):
        return math.inf
    if y not in _lookup(instance, "Y", instance.Y_points):
        return math.inf
    if not (alpha <= 0.0) or not (0.0 <= lam <= instance.lambda_bar):
        return math.inf
    if instance.f_at(x, y) == math.inf:
        return math.inf
    shifted = tuple(h + a for h, a in zip(instance.H_at(x, y), u))
    if tol > 0:
        if distance(shifted, instance.D, instance.norm) > tol:
            return math.inf
    elif not contains(instance.D, shifted):
        return math.inf
    mu = penalty_value_mu(instance, x, lam)
    if instance.g_at(x, y) + alpha - mu > instance.tau_nu + tol:
        return math.inf
    return psi_0(instance, (x, y, u, alpha, lam))


def _as_schedule(s: Schedule) -> Callable[[int], float]:
    if s is None:
        return lambda k: 0.0
    if callable(s):
        return s
    if isinstance(s, (int, float)):
        return lambda k: float(s)
    seq = list(s)
    return lambda k: float(seq[min(k, len(seq)) - 1])


def _initial_point(instance):
    for x in instance.X_points:
        for y in instance.Y_points:
            if instance.f_at(x, y) < math.inf:
                u = min_norm_correction(instance.H_at(x, y), instance.D, instance.norm)
                return (x, y, u, 0.0, instance.lambda_bar)
    return None


def outer_approximation(
    instance,
    eps_schedule: Schedule = None,
    delta_schedule: Schedule = None,
    max_iter: Optional[int] = None,
    start=None,
) -> OaTrace:
    """Outer approximation over the cut set ``Y^nu``.

    Each iteration adds a ``delta_k``-minimizer ``z_k`` of the penalized
    lower-level objective at the previous ``x`` (first in ``Y^nu`` order)
    and re-solves the master over the grown cut set by enumeration.  The
    loop stops as soon as ``z_k`` is already a cut, or after ``max_iter``
    iterations (default ``|Y^nu| + 1``).
    """
    eps = _as_schedule(eps_schedule)
    delta = _as_schedule(delta_schedule)
    y_nu = instance.Y_nu
    if max_iter is None:
        max_iter = len(y_nu) + 1
    w = start if start is not None else _initial_point(instance)
    if w is None:
        return OaTrace((), SolveRecord(INFEASIBLE), INFEASIBLE, ())
    cutset: list[tuple] = []
    record: Optional[SolveRecord] = None
    iterations = []
    status = "max_iter"
    for k in range(1, max_iter + 1):
        x_prev, lam_prev = tuple(w[0]), w[4]
        vals = [instance.g_at(x_prev, z) + lam_prev * instance.dist_at(x_prev, z) for z in y_nu]
        d_k = delta(k)
        threshold = min(vals) + d_k
        idx = next(i for i, v in enumerate(vals) if v <= threshold)
        z_k = y_nu[idx]
        violation = psi_z(instance, w, z_k)
        e_k = eps(k)
        if z_k in cutset:
            iterations.append(OaIteration(
                k, z_k, idx, False, record.value, e_k, d_k, record.value - e_k, violation
            ))
            status = "converged"
            break
        cutset.append(z_k)
        record = solve_stabilized_full(instance, cutset=cutset)
        if record.status != OPTIMAL:
            iterations.append(OaIteration(k, z_k, idx, True, math.inf, e_k, d_k, math.inf, violation))
            status = INFEASIBLE
            break
        iterations.append(OaIteration(
            k, z_k, idx, True, record.value, e_k, d_k, record.value - e_k, violation
        ))
        w = record.w
    return OaTrace(tuple(iterations), record, status, tuple(cutset))


def construct_feasible_point(instance, x_bar, y_bar) -> tuple:
    """Feasible lifted point above ``(x_bar, y_bar)`` with ``lam = lambda_bar``.

    Raises:
        ValueError: if ``(x_bar, y_bar)`` violates the domain constraints.
    """
    x_bar, y_bar = tuple(x_bar), tuple(y_bar)
    if instance.f_at(x_bar, y_bar) == math.inf:
        raise ValueError(f"({x_bar}, {y_bar}) lies outside the domain of f")
    u = min_norm_correction(instance.H_at(x_bar, y_bar), instance.D, instance.norm)
    mu = penalty_value_mu(instance, x_bar, instance.lambda_bar)
    alpha = min(0.0, (mu + instance.tau_nu) - instance.g_at(x_bar, y_bar))
    return (x_bar, y_bar, u, alpha, instance.lambda_bar)
