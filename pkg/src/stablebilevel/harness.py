"""Problem files, nu-sweeps and report persistence.

A problem file is one JSON document::

    {
      "dims": {"n": 1, "m": 1, "q": 1},
      "sets": {"X": {"kind": "box", "intervals": [[1, 2]], "grid": [101]},
               "Y": {"kind": "finite", "points": [[0], [1]]},
               "D": {"kind": "box", "intervals": [["-inf", 0]]}},
      "norm": "L1",
      "tau": 0,
      "objectives": {"f": "(y1 - 1/2) * x1", "g": "-x1 * y1"},
      "constraints": {"H": ["y1 - 1"]},
      "upper_domain": [{"expr": "x1", "interval": [1, 2]}],
      "family": {"f_nu": ..., "g_nu": ..., "H_nu": [...], "Y_nu_rule": {"kind": "full"}},
      "schedule": {"sigma": {"coef": 1, "power": 0.5}, "theta": ..., "lambda_bar": ...,
                   "tau_nu": ..., "delta_rate": ..., "eta_rate": ...}
    }

Rates are a number (constant), ``{"coef", "power"}`` or ``{"values": [...]}``
(explicit, indexed from ``nu = 1``).  Infinite interval endpoints are the
strings ``"inf"`` / ``"-inf"``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema

from .baselines import solve_naive, solve_oracle
from .calmness import certify_calm_at, finite_threshold
from .expr import ExprError, check_names, parse_expr
from .geometry import FinitePoints, GridSpec, IntervalBox, Norm, UnionOfBoxes
from .lowerlevel import check_bilevel_feasible
from .model import (
    ApproximationFamily,
    BilevelProblem,
    DomainConstraint,
    ParameterSchedule,
    Rate,
    YNuRule,
    build_instance,
    validate_schedules,
)
from .solver import OPTIMAL, solve_stabilized_full

__all__ = [
    "ProblemFileError",
    "PROBLEM_SCHEMA",
    "BUNDLED",
    "problem_from_dict",
    "load_problem",
    "bundled_path",
    "SweepRow",
    "ConvergenceReport",
    "sweep",
    "emit_report",
    "report_from_json",
    "report_to_json",
    "report_to_csv",
    "CSV_COLUMNS",
]

BUNDLED = ("example_sec3", "noncompact_counterexample", "random_finite_seed42")
CSV_COLUMNS = ("nu", "m_nu", "x", "y", "u_norm", "alpha", "lambda", "gap", "naive_value", "naive_gap")

FINITE_TAIL_NOTE = (
    "Limits in nu are replaced by finite-tail checks over the sweep; the "
    "cluster point is taken to be the solution at the largest nu."
)


class ProblemFileError(ValueError):
    """Schema or semantic error in a problem file; ``pointer`` is a JSON pointer."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"
        self.message = message


_NUMBER = {"oneOf": [{"type": "number"}, {"enum": ["inf", "+inf", "-inf"]}]}
_INTERVAL = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}
_RATE = {
    "oneOf": [
        {"type": "number", "minimum": 0},
        {
            "type": "object",
            "properties": {"coef": {"type": "number", "minimum": 0}, "power": {"type": "number"}},
            "required": ["coef", "power"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"values": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}},
            "required": ["values"],
            "additionalProperties": False,
        },
    ]
}
_SET = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["box", "finite", "union"]},
        "intervals": {"type": "array", "items": _INTERVAL, "minItems": 1},
        "points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 1}, "minItems": 1},
        "boxes": {"type": "array", "items": {"type": "array", "items": _INTERVAL, "minItems": 1}, "minItems": 1},
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "box"}}}, "then": {"required": ["intervals"]}},
        {"if": {"properties": {"kind": {"const": "finite"}}}, "then": {"required": ["points"]}},
        {"if": {"properties": {"kind": {"const": "union"}}}, "then": {"required": ["boxes"]}},
    ],
}
PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "dims": {
            "type": "object",
            "properties": {k: {"type": "integer", "minimum": 1} for k in ("n", "m", "q")},
            "required": ["n", "m", "q"],
            "additionalProperties": False,
        },
        "sets": {
            "type": "object",
            "properties": {"X": _SET, "Y": _SET, "D": _SET},
            "required": ["X", "Y", "D"],
            "additionalProperties": False,
        },
        "norm": {"enum": ["L1", "L2", "LINF"]},
        "tau": {"type": "number", "minimum": 0},
        "objectives": {
            "type": "object",
            "properties": {"f": {"type": "string"}, "g": {"type": "string"}},
            "required": ["f", "g"],
            "additionalProperties": False,
        },
        "constraints": {
            "type": "object",
            "properties": {"H": {"type": "array", "items": {"type": "string"}, "minItems": 1}},
            "required": ["H"],
            "additionalProperties": False,
        },
        "upper_domain": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"expr": {"type": "string"}, "interval": _INTERVAL},
                "required": ["expr", "interval"],
                "additionalProperties": False,
            },
        },
        "family": {
            "type": "object",
            "properties": {
                "f_nu": {"type": "string"},
                "g_nu": {"type": "string"},
                "H_nu": {"type": "array", "items": {"type": "string"}},
                "Y_nu_rule": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["full", "prefix", "nested"]},
                        "count": _RATE,
                        "levels": {"type": "integer", "minimum": 0},
                    },
                    "required": ["kind"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "schedule": {
            "type": "object",
            "properties": {
                k: _RATE for k in ("sigma", "theta", "lambda_bar", "tau_nu", "delta_rate", "eta_rate")
            },
            "required": ["sigma", "theta", "lambda_bar"],
            "additionalProperties": False,
        },
    },
    "required": ["dims", "sets", "norm", "objectives", "constraints", "schedule"],
    "additionalProperties": False,
}

_VALIDATOR = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)


def _pointer(parts) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in parts) if parts else "/"


def _num(v) -> float:
    if isinstance(v, str):
        return -math.inf if v.startswith("-") else math.inf
    return float(v)


def _box(intervals) -> IntervalBox:
    return IntervalBox(tuple(_num(a) for a, _ in intervals), tuple(_num(b) for _, b in intervals))


def _set(doc: dict, where: str):
    try:
        kind = doc["kind"]
        if kind == "finite":
            return FinitePoints(tuple(tuple(p) for p in doc["points"])), None
        if kind == "box":
            box = _box(doc["intervals"])
            grid = GridSpec(tuple(doc["grid"])) if "grid" in doc else None
            return box, grid
        return UnionOfBoxes(tuple(_box(b) for b in doc["boxes"])), None
    except ValueError as exc:
        raise ProblemFileError(where, str(exc)) from None


def _rate(v) -> Rate:
    if isinstance(v, (int, float)):
        return Rate.constant(float(v))
    if "values" in v:
        return Rate(values=tuple(v["values"]))
    return Rate(coef=float(v["coef"]), power=float(v["power"]))


def _expr(text: str, where: str, dims=None, allow_nu=False):
    try:
        ast = parse_expr(text)
        if dims is not None:
            check_names(ast, dims[0], dims[1], allow_nu=allow_nu)
        return ast
    except ExprError as exc:
        raise ProblemFileError(where, str(exc)) from None


def problem_from_dict(doc: dict):
    """Build ``(problem, family, schedule)`` from a problem document.

    Raises:
        ProblemFileError: with the JSON pointer of the offending field.
    """
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ProblemFileError(_pointer(err.absolute_path), err.message)
    dims = doc["dims"]
    n, m, q = dims["n"], dims["m"], dims["q"]
    sets = {}
    for label in ("X", "Y", "D"):
        s, grid = _set(doc["sets"][label], f"/sets/{label}")
        expected = {"X": n, "Y": m, "D": q}[label]
        if s.dim != expected:
            raise ProblemFileError(f"/sets/{label}", f"dimension {s.dim} does not match dims ({expected})")
        if grid is not None and len(grid.resolution) != expected:
            raise ProblemFileError(f"/sets/{label}/grid", f"grid needs {expected} entries")
        sets[label] = (s, grid)
    for label in ("X", "Y"):
        s, grid = sets[label]
        if isinstance(s, UnionOfBoxes):
            raise ProblemFileError(f"/sets/{label}/kind", "X and Y must be finite sets or boxes")
        if isinstance(s, IntervalBox) and grid is None:
            raise ProblemFileError(f"/sets/{label}", "a box needs a 'grid' to be discretized")
        if isinstance(s, IntervalBox) and not s.is_bounded:
            raise ProblemFileError(f"/sets/{label}/intervals", "a gridded box must be bounded")
    nm = (n, m)
    f = _expr(doc["objectives"]["f"], "/objectives/f", nm)
    g = _expr(doc["objectives"]["g"], "/objectives/g", nm)
    H_src = doc["constraints"]["H"]
    if len(H_src) != q:
        raise ProblemFileError("/constraints/H", f"{len(H_src)} components given, q={q}")
    H = tuple(_expr(h, f"/constraints/H/{j}", nm) for j, h in enumerate(H_src))
    domain = tuple(
        DomainConstraint(_expr(c["expr"], f"/upper_domain/{i}/expr", nm), _num(c["interval"][0]), _num(c["interval"][1]))
        for i, c in enumerate(doc.get("upper_domain", []))
    )
    try:
        problem = BilevelProblem(
            n=n, m=m, q=q,
            X=sets["X"][0], Y=sets["Y"][0], D=sets["D"][0],
            f=f, g=g, H=H,
            tau=float(doc.get("tau", 0.0)),
            norm=Norm.parse(doc["norm"]),
            upper_domain=domain,
            x_grid=sets["X"][1], y_grid=sets["Y"][1],
            name=doc.get("name", ""),
        )
    except ValueError as exc:
        raise ProblemFileError("/", str(exc)) from None

    fam = doc.get("family", {})
    rule_doc = fam.get("Y_nu_rule", {"kind": "full"})
    try:
        rule = YNuRule(
            kind=rule_doc["kind"],
            count=_rate(rule_doc["count"]) if "count" in rule_doc else None,
            levels=rule_doc.get("levels", 0),
        )
    except ValueError as exc:
        raise ProblemFileError("/family/Y_nu_rule", str(exc)) from None
    if rule.kind == "prefix" and rule.count.closed_form and rule.count.power == 0:
        if math.ceil(rule.count.coef) > len(problem.Y_points):
            warnings.warn(
                f"prefix rule count {rule.count.coef:g} exceeds |Y|={len(problem.Y_points)}; clamped",
                stacklevel=2,
            )
    H_nu = None
    if "H_nu" in fam:
        if len(fam["H_nu"]) != q:
            raise ProblemFileError("/family/H_nu", f"{len(fam['H_nu'])} components given, q={q}")
        H_nu = tuple(_expr(h, f"/family/H_nu/{j}", nm, True) for j, h in enumerate(fam["H_nu"]))
    family = ApproximationFamily(
        f_nu=_expr(fam["f_nu"], "/family/f_nu", nm, True) if "f_nu" in fam else None,
        g_nu=_expr(fam["g_nu"], "/family/g_nu", nm, True) if "g_nu" in fam else None,
        H_nu=H_nu,
        y_rule=rule,
    )
    try:
        family.check(problem)
    except (ExprError, ValueError) as exc:
        raise ProblemFileError("/family", str(exc)) from None

    sd = doc["schedule"]
    schedule = ParameterSchedule(
        sigma=_rate(sd["sigma"]),
        theta=_rate(sd["theta"]),
        lambda_bar=_rate(sd["lambda_bar"]),
        tau_nu=_rate(sd["tau_nu"]) if "tau_nu" in sd else None,
        delta_rate=_rate(sd["delta_rate"]) if "delta_rate" in sd else None,
        eta_rate=_rate(sd["eta_rate"]) if "eta_rate" in sd else None,
    )
    return problem, family, schedule


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("stablebilevel") / "data" / f"{name}.json"))


def load_problem(path):
    """Read and validate a problem file; bundled names are also accepted."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        p = bundled_path(str(path))
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ProblemFileError("/", f"invalid JSON: {exc}") from None
    return problem_from_dict(doc)


@dataclass(frozen=True)
class SweepRow:
    nu: int
    status: str
    m_nu: float
    x: Optional[tuple]
    y: Optional[tuple]
    u_norm: Optional[float]
    alpha: Optional[float]
    lam: Optional[float]
    gap: float
    naive_value: float
    naive_gap: float
    naive_x: Optional[tuple]
    naive_y: Optional[tuple]
    calm_status: Optional[str]
    calm_threshold: Optional[float]
    feasible: bool
    optimal: bool


@dataclass(frozen=True)
class ConvergenceReport:
    problem: str
    oracle_m: float
    oracle_set: tuple
    rows: tuple
    validation: dict
    flags: dict
    notes: tuple = (FINITE_TAIL_NOTE,)
    timing: dict = field(default_factory=dict, compare=False)

    def row(self, nu: int) -> SweepRow:
        for r in self.rows:
            if r.nu == nu:
                return r
        raise KeyError(nu)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "oracle": {"m": self.oracle_m, "optimal_set": [[list(a), list(b)] for a, b in self.oracle_set]},
            "rows": [asdict(r) for r in self.rows],
            "validation": self.validation,
            "flags": self.flags,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict, timing: Optional[dict] = None) -> "ConvergenceReport":
        def tup(v):
            return None if v is None else tuple(v)

        rows = []
        for r in d["rows"]:
            r = dict(r)
            for k in ("x", "y", "naive_x", "naive_y"):
                r[k] = tup(r[k])
            rows.append(SweepRow(**r))
        return cls(
            problem=d["problem"],
            oracle_m=d["oracle"]["m"],
            oracle_set=tuple((tuple(a), tuple(b)) for a, b in d["oracle"]["optimal_set"]),
            rows=tuple(rows),
            validation=d["validation"],
            flags=d["flags"],
            notes=tuple(d["notes"]),
            timing=timing or {},
        )


def _gap(a: float, b: float) -> float:
    if math.isinf(a) or math.isinf(b):
        return math.inf if a != b else 0.0
    return a - b


def sweep(problem, family, sched, nu_list: Sequence[int], tol: float = 1e-9) -> ConvergenceReport:
    """Solve the lifted and naive problems at each ``nu`` and compare to the oracle."""
    nu_list = list(nu_list)
    if any(b <= a for a, b in zip(nu_list, nu_list[1:])):
        raise ValueError("nu_list must be strictly increasing")
    t0 = time.perf_counter()
    oracle = solve_oracle(problem)
    m = oracle.value
    rows = []
    per_nu = []
    for nu in nu_list:
        t = time.perf_counter()
        inst = build_instance(problem, family, sched, nu)
        rec = solve_stabilized_full(inst)
        naive = solve_naive(problem, family, nu)
        if rec.status == OPTIMAL:
            feasible = check_bilevel_feasible(problem, rec.x, rec.y)
            optimal = feasible and problem.f_at(rec.x, rec.y) <= m + tol
            cert = certify_calm_at(problem, rec.x, tol=tol)
            calm_status, calm = cert.status, finite_threshold(problem, rec.x)
        else:
            feasible = optimal = False
            calm_status = calm = None
        rows.append(SweepRow(
            nu=nu,
            status=rec.status,
            m_nu=rec.value,
            x=rec.x,
            y=rec.y,
            u_norm=rec.u_norm,
            alpha=rec.alpha,
            lam=rec.lam,
            gap=_gap(rec.value, m),
            naive_value=naive.value,
            naive_gap=_gap(naive.value, m),
            naive_x=naive.x,
            naive_y=naive.y,
            calm_status=calm_status,
            calm_threshold=calm,
            feasible=feasible,
            optimal=optimal,
        ))
        per_nu.append(time.perf_counter() - t)

    flags = {}
    if len(rows) >= 2:
        tail = rows[len(rows) // 2:]
        flags["tail_bounded_by_m"] = max(r.m_nu for r in tail) <= m + tol
        flags["last_feasible"] = rows[-1].feasible
        flags["last_optimal"] = rows[-1].optimal
        first = None
        for r in reversed(rows):
            if not r.optimal:
                break
            first = r.nu
        flags["optimal_from_nu"] = first
    else:
        flags = {"tail_bounded_by_m": None, "last_feasible": None, "last_optimal": None, "optimal_from_nu": None}
        if rows:
            flags["last_feasible"] = rows[-1].feasible
            flags["last_optimal"] = rows[-1].optimal
    return ConvergenceReport(
        problem=problem.name,
        oracle_m=m,
        oracle_set=oracle.optimal_set,
        rows=tuple(rows),
        validation=validate_schedules(sched).to_dict(),
        flags=flags,
        timing={"total_s": time.perf_counter() - t0, "per_nu_s": per_nu},
    )


def _encode(v):
    if isinstance(v, float):
        if v == math.inf:
            return "inf"
        if v == -math.inf:
            return "-inf"
        return v
    if isinstance(v, dict):
        return {k: _encode(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_encode(x) for x in v]
    return v


def _decode(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    if isinstance(v, dict):
        return {k: _decode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_decode(x) for x in v]
    return v


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (tuple, list)):
        return ";".join(_fmt(a) for a in v)
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def report_to_json(report: ConvergenceReport) -> str:
    body = {"report": _encode(report.to_dict()), "timing": _encode(report.timing)}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> ConvergenceReport:
    doc = json.loads(text)
    return ConvergenceReport.from_dict(_decode(doc["report"]), timing=_decode(doc.get("timing", {})))


def report_to_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([
            _fmt(r.nu), _fmt(r.m_nu), _fmt(r.x), _fmt(r.y), _fmt(r.u_norm), _fmt(r.alpha),
            _fmt(r.lam), _fmt(r.gap), _fmt(r.naive_value), _fmt(r.naive_gap),
        ])
    return buf.getvalue()


def emit_report(report: ConvergenceReport, path, fmt: str = "json") -> Path:
    """Write ``report`` as JSON (exact floats) or CSV (12 significant digits)."""
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    path.write_text(text)
    return path
