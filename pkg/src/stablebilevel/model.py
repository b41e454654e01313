"""Problem data, approximation families, parameter schedules and instances.

A :class:`BilevelProblem` holds the exact data ``(X, Y, D, f, g, H, tau)``
with ``X`` and ``Y`` discretized once into finite master lists.  An
:class:`ApproximationFamily` gives the ``nu``-indexed data ``f^nu, g^nu,
H^nu, Y^nu`` and a :class:`ParameterSchedule` the penalty parameters.
:func:`build_instance` materializes both at a fixed ``nu``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .expr import ExprAst, ExprDomainError, check_names, eval_expr, free_vars, substitute
from .geometry import (
    FinitePoints,
    GridSpec,
    IntervalBox,
    Norm,
    SetSpec,
    UnionOfBoxes,
    distance,
    grid_points,
)

log = logging.getLogger(__name__)

__all__ = [
    "DomainConstraint",
    "BilevelProblem",
    "YNuRule",
    "ApproximationFamily",
    "Rate",
    "ParameterSchedule",
    "StabilizedInstance",
    "ClauseResult",
    "ValidationReport",
    "build_instance",
    "materialize",
    "validate_schedules",
    "estimate_error_rates",
]


@dataclass(frozen=True)
class DomainConstraint:
    """Side constraint ``lower <= expr(x, y) <= upper`` encoding ``dom f``."""

    expr: ExprAst
    lower: float = -math.inf
    upper: float = math.inf


def _bindings(x, y) -> dict:
    b = {f"x{i + 1}": v for i, v in enumerate(x)}
    for i, v in enumerate(y):
        b[f"y{i + 1}"] = v
        b[f"z{i + 1}"] = v
    return b


def _discretize(s: SetSpec, grid: Optional[GridSpec], label: str):
    if isinstance(s, FinitePoints):
        return s.points, (len(s.points),)
    if isinstance(s, IntervalBox):
        if grid is None:
            raise ValueError(f"{label} is a box and needs a grid to be discretized")
        return tuple(grid_points(s, grid)), grid.resolution
    raise ValueError(f"{label} must be a finite set or a box, not a union")


class _DataEvaluator:
    """Cached evaluation of ``f``, ``g``, ``H`` and the domain constraints."""

    f: ExprAst
    g: ExprAst
    H: tuple
    upper_domain: tuple

    def _cache_for(self, name):
        caches = self.__dict__.setdefault("_eval_cache", {})
        return caches.setdefault(name, {})

    def f_at(self, x, y) -> float:
        """Upper objective; ``+inf`` outside its domain (implicit constraints)."""
        cache = self._cache_for("f")
        key = x, y = tuple(x), tuple(y)
        if key not in cache:
            if not self.in_domain(x, y):
                cache[key] = math.inf
            else:
                try:
                    cache[key] = eval_expr(self.f, _bindings(x, y))
                except ExprDomainError:
                    cache[key] = math.inf
        return cache[key]

    def g_at(self, x, y) -> float:
        cache = self._cache_for("g")
        key = x, y = tuple(x), tuple(y)
        if key not in cache:
            cache[key] = eval_expr(self.g, _bindings(x, y))
        return cache[key]

    def H_at(self, x, y) -> tuple:
        cache = self._cache_for("H")
        key = x, y = tuple(x), tuple(y)
        if key not in cache:
            b = _bindings(x, y)
            cache[key] = tuple(eval_expr(h, b) for h in self.H)
        return cache[key]

    def dist_at(self, x, y) -> float:
        """``dist(H(x, y), D)`` in the problem norm."""
        cache = self._cache_for("dist")
        key = x, y = tuple(x), tuple(y)
        if key not in cache:
            cache[key] = distance(self.H_at(x, y), self.D, self.norm)
        return cache[key]

    def in_domain(self, x, y) -> bool:
        if not self.upper_domain:
            return True
        b = _bindings(x, y)
        for c in self.upper_domain:
            try:
                v = eval_expr(c.expr, b)
            except ExprDomainError:
                return False
            if not (c.lower <= v <= c.upper):
                return False
        return True


@dataclass(frozen=True, eq=False)
class BilevelProblem(_DataEvaluator):
    """Exact bilevel data with finite master sets for ``X`` and ``Y``."""

    n: int
    m: int
    q: int
    X: SetSpec
    Y: SetSpec
    D: SetSpec
    f: ExprAst
    g: ExprAst
    H: tuple
    tau: float = 0.0
    norm: Norm = Norm.L1
    upper_domain: tuple = ()
    x_grid: Optional[GridSpec] = None
    y_grid: Optional[GridSpec] = None
    name: str = ""
    X_points: tuple = field(init=False, repr=False)
    Y_points: tuple = field(init=False, repr=False)
    y_shape: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "H", tuple(self.H))
        object.__setattr__(self, "upper_domain", tuple(self.upper_domain))
        if self.n < 1 or self.m < 1 or self.q < 1:
            raise ValueError("dimensions n, m, q must be positive")
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be a nonnegative real, got {self.tau}")
        for label, s, d in (("X", self.X, self.n), ("Y", self.Y, self.m), ("D", self.D, self.q)):
            if s.dim != d:
                raise ValueError(f"{label} has dimension {s.dim}, expected {d}")
        if len(self.H) != self.q:
            raise ValueError(f"H has {len(self.H)} components, expected q={self.q}")
        for label, e in [("f", self.f), ("g", self.g)] + [(f"H[{j}]", h) for j, h in enumerate(self.H)]:
            try:
                check_names(e, self.n, self.m, allow_nu=False)
            except Exception as exc:
                raise ValueError(f"{label}: {exc}") from None
        for c in self.upper_domain:
            check_names(c.expr, self.n, self.m, allow_nu=False)
        xs, _ = _discretize(self.X, self.x_grid, "X")
        ys, shape = _discretize(self.Y, self.y_grid, "Y")
        object.__setattr__(self, "X_points", xs)
        object.__setattr__(self, "Y_points", ys)
        object.__setattr__(self, "y_shape", shape)

    @property
    def default_cutset(self) -> tuple:
        return self.Y_points


@dataclass(frozen=True)
class YNuRule:
    """How ``Y^nu`` is drawn from the master list of ``Y``.

    ``full`` uses every master point; ``prefix`` the first ``ceil(count(nu))``
    points; ``nested`` keeps grid points whose axis indices are multiples of
    ``2 ** (levels - floor(count(nu)))``.
    """

    kind: str = "full"
    count: Optional["Rate"] = None
    levels: int = 0

    def __post_init__(self):
        if self.kind not in ("full", "prefix", "nested"):
            raise ValueError(f"unknown Y_nu rule {self.kind!r}")
        if self.kind != "full" and self.count is None:
            raise ValueError(f"Y_nu rule {self.kind!r} needs a count schedule")
        if self.kind == "nested" and self.levels < 0:
            raise ValueError("nested rule needs levels >= 0")

    def select(self, problem: BilevelProblem, nu: int) -> tuple:
        ys = problem.Y_points
        if self.kind == "full":
            return ys
        if self.kind == "prefix":
            k = math.ceil(self.count(nu))
            if k > len(ys):
                warnings.warn(
                    f"prefix rule asks for {k} points at nu={nu} but Y has {len(ys)}; clamped",
                    stacklevel=2,
                )
                k = len(ys)
            return ys[: max(k, 1)]
        level = min(self.levels, max(0, math.floor(self.count(nu))))
        stride = 2 ** (self.levels - level)
        idx = np.unravel_index(np.arange(len(ys)), problem.y_shape)
        keep = np.all([axis % stride == 0 for axis in idx], axis=0)
        return tuple(y for y, k in zip(ys, keep) if k)


@dataclass(frozen=True)
class ApproximationFamily:
    """``nu``-indexed data.  ``None`` fields fall back to the exact data."""

    f_nu: Optional[ExprAst] = None
    g_nu: Optional[ExprAst] = None
    H_nu: Optional[tuple] = None
    y_rule: YNuRule = field(default_factory=YNuRule)

    def check(self, problem: BilevelProblem) -> None:
        exprs = [e for e in (self.f_nu, self.g_nu) if e is not None]
        if self.H_nu is not None:
            if len(self.H_nu) != problem.q:
                raise ValueError(f"H_nu has {len(self.H_nu)} components, expected q={problem.q}")
            exprs.extend(self.H_nu)
        for e in exprs:
            check_names(e, problem.n, problem.m, allow_nu=True)

    @property
    def is_exact(self) -> bool:
        return self.f_nu is None and self.g_nu is None and self.H_nu is None


@dataclass(frozen=True)
class Rate:
    """Nonnegative sequence ``coef * nu**power`` or explicit per-``nu`` values."""

    coef: float = 1.0
    power: float = 0.0
    values: Optional[tuple] = None

    def __post_init__(self):
        if self.values is not None:
            vals = tuple(float(v) for v in self.values)
            if not vals:
                raise ValueError("explicit schedule needs at least one value")
            if any(not (v >= 0) or not math.isfinite(v) for v in vals):
                raise ValueError("explicit schedule values must be finite and nonnegative")
            object.__setattr__(self, "values", vals)
        elif not (self.coef >= 0) or not math.isfinite(self.coef):
            raise ValueError(f"schedule coefficient must be nonnegative, got {self.coef}")

    @property
    def closed_form(self) -> bool:
        return self.values is None

    def __call__(self, nu: float) -> float:
        if self.values is not None:
            i = int(nu)
            if i < 1 or i > len(self.values) or i != nu:
                raise ValueError(f"explicit schedule defined for nu=1..{len(self.values)}, got {nu}")
            return self.values[i - 1]
        if self.coef == 0.0:
            return 0.0
        return self.coef * float(nu) ** self.power

    @classmethod
    def constant(cls, c: float) -> "Rate":
        return cls(coef=c, power=0.0)


@dataclass(frozen=True)
class ParameterSchedule:
    sigma: Rate
    theta: Rate
    lambda_bar: Rate
    tau_nu: Optional[Rate] = None  # None means tau^nu = tau
    delta_rate: Optional[Rate] = None
    eta_rate: Optional[Rate] = None


@dataclass(frozen=True, eq=False)
class StabilizedInstance(_DataEvaluator):
    """The lifted problem at a fixed ``nu`` with every parameter numeric."""

    nu: int
    problem: BilevelProblem
    f: ExprAst
    g: ExprAst
    H: tuple
    upper_domain: tuple
    Y_nu: tuple
    sigma: float
    theta: float
    lambda_bar: float
    tau_nu: float

    @property
    def X_points(self):
        return self.problem.X_points

    @property
    def Y_points(self):
        return self.problem.Y_points

    @property
    def D(self):
        return self.problem.D

    @property
    def norm(self):
        return self.problem.norm

    @property
    def tau(self):
        return self.problem.tau

    @property
    def default_cutset(self) -> tuple:
        return self.Y_nu

    def with_parameters(self, **changes) -> "StabilizedInstance":
        """Copy with some of ``sigma``, ``theta``, ``lambda_bar``, ``tau_nu`` replaced."""
        bad = set(changes) - {"sigma", "theta", "lambda_bar", "tau_nu"}
        if bad:
            raise TypeError(f"unknown parameters {sorted(bad)}")
        for k, v in changes.items():
            if not (v >= 0):
                raise ValueError(f"{k} must be nonnegative, got {v}")
        return replace(self, **changes)


def materialize(problem: BilevelProblem, family: ApproximationFamily, nu: float):
    """Return ``(f^nu, g^nu, H^nu, domain^nu)`` with ``nu`` substituted."""
    vals = {"nu": float(nu)}
    f = substitute(family.f_nu, vals) if family.f_nu is not None else problem.f
    g = substitute(family.g_nu, vals) if family.g_nu is not None else problem.g
    if family.H_nu is not None:
        H = tuple(substitute(h, vals) for h in family.H_nu)
    else:
        H = problem.H
    dom = tuple(replace(c, expr=substitute(c.expr, vals)) for c in problem.upper_domain)
    return f, g, H, dom


def build_instance(
    problem: BilevelProblem,
    family: ApproximationFamily,
    sched: ParameterSchedule,
    nu: int,
) -> StabilizedInstance:
    """Materialize the lifted problem at ``nu``.

    Raises:
        ValueError: ``nu`` not a positive integer, a negative parameter value
            or an empty ``Y^nu``.
    """
    if int(nu) != nu or nu < 1:
        raise ValueError(f"nu must be a positive integer, got {nu}")
    nu = int(nu)
    family.check(problem)
    f, g, H, dom = materialize(problem, family, nu)
    params = {
        "sigma": sched.sigma(nu),
        "theta": sched.theta(nu),
        "lambda_bar": sched.lambda_bar(nu),
        "tau_nu": sched.tau_nu(nu) if sched.tau_nu is not None else problem.tau,
    }
    for k, v in params.items():
        if not (v >= 0) or not math.isfinite(v):
            raise ValueError(f"parameter {k} at nu={nu} must be a nonnegative real, got {v}")
    y_nu = family.y_rule.select(problem, nu)
    if not y_nu:
        raise ValueError(f"Y^nu is empty at nu={nu}")
    return StabilizedInstance(
        nu=nu, problem=problem, f=f, g=g, H=H, upper_domain=dom, Y_nu=y_nu, **params
    )


@dataclass(frozen=True)
class ClauseResult:
    name: str
    passed: Optional[bool]
    method: str  # "exponent", "numeric only", "undetermined"
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    clauses: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def __getitem__(self, name: str) -> ClauseResult:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "clauses": [
                {"name": c.name, "passed": c.passed, "method": c.method, "detail": c.detail}
                for c in self.clauses
            ],
        }


def _product_tends(factors: Sequence[Rate], target: str) -> ClauseResult:
    """Decide whether a product of power rates tends to 0 or to infinity."""
    if any(c.coef == 0.0 for c in factors):
        ok = target == "zero"
        return ClauseResult("", ok, "exponent", "identically zero")
    exponent = sum(c.power for c in factors)
    if target == "zero":
        ok = exponent < 0
    else:
        ok = exponent > 0
    return ClauseResult("", ok, "exponent", f"exponent {exponent:g}")


def _numeric_tends(factors: Sequence[Rate], target: str) -> ClauseResult:
    lengths = [len(c.values) for c in factors if c.values is not None]
    horizon = min(lengths)
    seq = np.array([math.prod(c(nu) for c in factors) for nu in range(1, horizon + 1)])
    tail = seq[len(seq) // 2 :]
    if target == "zero":
        ok = bool(np.all(np.diff(tail) <= 0) and seq[-1] < seq[0]) or bool(np.all(seq == 0))
    else:
        ok = bool(np.all(np.diff(tail) >= 0) and seq[-1] > seq[0])
    return ClauseResult("", ok, "numeric only", f"checked nu=1..{horizon}, last={seq[-1]:.6g}")


def validate_schedules(sched: ParameterSchedule) -> ValidationReport:
    """Check the four growth conditions linking penalties and error rates.

    Closed-form schedules are decided exactly by exponent arithmetic;
    explicit arrays only by a trend heuristic over their range.
    """
    clauses = [
        ("lambda_bar -> inf", [sched.lambda_bar], "inf"),
        ("sigma*eta -> 0", [sched.sigma, sched.eta_rate], "zero"),
        ("theta*lambda_bar*eta -> 0", [sched.theta, sched.lambda_bar, sched.eta_rate], "zero"),
        ("theta*delta -> 0", [sched.theta, sched.delta_rate], "zero"),
    ]
    out = []
    for name, factors, target in clauses:
        if any(c is None for c in factors):
            out.append(ClauseResult(name, None, "undetermined", "error rate not declared"))
            continue
        if all(c.closed_form for c in factors):
            res = _product_tends(factors, target)
        else:
            res = _numeric_tends(factors, target)
        out.append(replace(res, name=name))
    return ValidationReport(tuple(out))


def estimate_error_rates(
    problem: BilevelProblem,
    family: ApproximationFamily,
    nu: int,
    sample_grid: Optional[Sequence[tuple]] = None,
) -> tuple[float, float]:
    """Empirical ``sup |g^nu - g|`` and ``sup |dist(H^nu, D) - dist(H, D)|``.

    The sup is taken over ``sample_grid`` (pairs ``(x, y)``; defaults to the
    master grids), so the values are lower bounds on the true error rates.
    """
    _, g_nu, H_nu, _ = materialize(problem, family, nu)
    if sample_grid is None:
        sample_grid = [(x, y) for x in problem.X_points for y in problem.Y_points]
    d_hat = 0.0
    e_hat = 0.0
    for x, y in sample_grid:
        b = _bindings(x, y)
        d_hat = max(d_hat, abs(eval_expr(g_nu, b) - problem.g_at(x, y)))
        h_nu = tuple(eval_expr(h, b) for h in H_nu)
        e_hat = max(e_hat, abs(distance(h_nu, problem.D, problem.norm) - problem.dist_at(x, y)))
    return d_hat, e_hat


def uses_nu(family: ApproximationFamily) -> bool:
    exprs = [e for e in (family.f_nu, family.g_nu) if e is not None] + list(family.H_nu or ())
    return any("nu" in free_vars(e) for e in exprs)
