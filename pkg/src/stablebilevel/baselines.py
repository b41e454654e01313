"""Ground-truth oracle and the naive substitution baseline.

Both enumerate the finite grids.  The oracle solves the exact bilevel
problem through the level-set reformulation: ``y`` is admissible for ``x``
when it is lower-level feasible and within ``tau`` of ``V(x, 0)``.  The
naive baseline runs the same enumeration on the problem obtained by
plugging ``f^nu, g^nu, H^nu`` into the exact formulation.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace

from .lowerlevel import tau_argmin
from .model import ApproximationFamily, BilevelProblem, materialize
from .solver import INFEASIBLE, OPTIMAL, SolveRecord

__all__ = ["solve_oracle", "solve_naive", "substituted_problem", "TIE_TOL"]

TIE_TOL = 1e-9


def _enumerate(problem: BilevelProblem, tie_tol: float) -> SolveRecord:
    t0 = time.perf_counter()
    candidates = []
    count = 0
    for x in problem.X_points:
        for y in tau_argmin(problem, x, problem.tau):
            count += 1
            fv = problem.f_at(x, y)
            if fv < math.inf:
                candidates.append((fv, x, y))
    if not candidates:
        return SolveRecord(INFEASIBLE, enumerated=count, wall_time=time.perf_counter() - t0)
    value, x, y = min(candidates)
    opt = tuple((cx, cy) for cv, cx, cy in sorted(candidates) if cv <= value + tie_tol)
    return SolveRecord(
        OPTIMAL,
        x=x,
        y=y,
        value=value,
        breakdown={"f": value},
        enumerated=count,
        wall_time=time.perf_counter() - t0,
        optimal_set=opt,
    )


def solve_oracle(problem: BilevelProblem, tie_tol: float = TIE_TOL) -> SolveRecord:
    """Exact minimum of the bilevel problem over the grids, with its optimal set."""
    return _enumerate(problem, tie_tol)


def substituted_problem(problem: BilevelProblem, family: ApproximationFamily, nu: int) -> BilevelProblem:
    """The exact formulation with the ``nu``-data plugged in."""
    family.check(problem)
    f, g, H, dom = materialize(problem, family, nu)
    return replace(problem, f=f, g=g, H=H, upper_domain=dom, name=f"{problem.name}[naive nu={nu}]")


def solve_naive(problem: BilevelProblem, family: ApproximationFamily, nu: int, tie_tol: float = TIE_TOL) -> SolveRecord:
    """Solve the naively perturbed bilevel problem at ``nu``."""
    return _enumerate(substituted_problem(problem, family, nu), tie_tol)
