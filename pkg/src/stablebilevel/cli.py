"""Command-line entry point.

Exit codes: 0 ok, 2 infeasible, 3 problem-file (schema) error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .baselines import solve_naive, solve_oracle
from .calmness import certify_calm_at, certify_local_calm, finite_threshold
from .harness import (
    ProblemFileError,
    emit_report,
    load_problem,
    problem_from_dict,
    report_to_csv,
    report_to_json,
    sweep,
    _encode,
    _fmt,
)
from .instances import random_instance_doc
from .model import build_instance, validate_schedules
from .solver import OPTIMAL, outer_approximation, solve_stabilized_full

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SCHEMA = 3

RECORD_COLUMNS = ("status", "value", "x", "y", "u", "u_norm", "alpha", "lambda")


def _load(args):
    if args.problem == "random":
        if args.seed is None:
            raise ProblemFileError("/", "--problem random needs --seed")
        return problem_from_dict(random_instance_doc(args.seed))
    return load_problem(args.problem)


def _write(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(args, payload: dict, csv_rows=None) -> None:
    if args.format == "csv" and csv_rows is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(csv_rows[0])
        for row in csv_rows[1:]:
            w.writerow([_fmt(v) for v in row])
        _write(args, buf.getvalue())
    else:
        _write(args, json.dumps(_encode(payload), indent=2, sort_keys=True) + "\n")


def _record_rows(rec_dict: dict):
    return [RECORD_COLUMNS, [rec_dict.get(c) for c in RECORD_COLUMNS]]


def cmd_solve(args) -> int:
    problem, family, sched = _load(args)
    inst = build_instance(problem, family, sched, args.nu)
    if args.oa:
        trace = outer_approximation(inst)
        rec = trace.record
        payload = {"nu": args.nu, "oa": trace.to_dict()}
        rows = None
        if args.format == "csv":
            cols = ("k", "z_k_index", "master_value", "lower_bound", "violation")
            rows = [cols] + [[r[c] for c in cols] for r in trace.csv_rows()]
        _dump(args, payload, rows)
    else:
        rec = solve_stabilized_full(inst, minimal_lam=args.minimal_lambda)
        d = rec.to_dict()
        _dump(args, {"nu": args.nu, "record": d}, _record_rows(d))
    return EXIT_OK if rec.status == OPTIMAL else EXIT_INFEASIBLE


def cmd_sweep(args) -> int:
    problem, family, sched = _load(args)
    if args.nu_to < args.nu_from:
        raise SystemExit("--nu-to must be >= --nu-from")
    report = sweep(problem, family, sched, range(args.nu_from, args.nu_to + 1), tol=args.tol)
    if args.out:
        emit_report(report, args.out, args.format)
    else:
        sys.stdout.write(report_to_csv(report) if args.format == "csv" else report_to_json(report))
    return EXIT_OK if report.rows and report.rows[-1].status == OPTIMAL else EXIT_INFEASIBLE


def cmd_naive(args) -> int:
    problem, family, _ = _load(args)
    rec = solve_naive(problem, family, args.nu)
    d = rec.to_dict()
    _dump(args, {"nu": args.nu, "record": d}, _record_rows(d))
    return EXIT_OK if rec.status == OPTIMAL else EXIT_INFEASIBLE


def cmd_oracle(args) -> int:
    problem, _, _ = _load(args)
    rec = solve_oracle(problem, tie_tol=args.tol)
    d = rec.to_dict()
    _dump(args, {"record": d}, _record_rows(d))
    return EXIT_OK if rec.status == OPTIMAL else EXIT_INFEASIBLE


def cmd_calmness(args) -> int:
    problem, _, _ = _load(args)
    x = tuple(float(v) for v in args.x.split(","))
    if len(x) != problem.n:
        raise ProblemFileError("/dims/n", f"--x has {len(x)} entries, n={problem.n}")
    if args.rho is not None:
        cert = certify_local_calm(problem, x, args.rho, tol=args.tol)
        payload = cert.to_dict()
        rows = [("x", "status", "threshold", "gap")] + [
            [s, p.status, p.threshold, g] for s, p, g in zip(cert.samples, cert.pointwise, cert.gaps)
        ]
    else:
        cert = certify_calm_at(problem, x, tol=args.tol)
        payload = cert.to_dict()
        payload["exact_threshold"] = finite_threshold(problem, x)
        rows = [("x", "status", "threshold", "gap", "exact_threshold")] + [
            [cert.x, cert.status, cert.threshold, cert.gap, payload["exact_threshold"]]
        ]
    _dump(args, payload, rows)
    return EXIT_OK


def cmd_validate(args) -> int:
    problem, family, sched = _load(args)
    report = validate_schedules(sched)
    payload = {
        "problem": problem.name,
        "dims": {"n": problem.n, "m": problem.m, "q": problem.q},
        "grid_sizes": {"X": len(problem.X_points), "Y": len(problem.Y_points)},
        "family_exact": family.is_exact,
        "schedule": report.to_dict(),
    }
    rows = [("clause", "passed", "method", "detail")] + [
        [c.name, "" if c.passed is None else c.passed, c.method, c.detail] for c in report.clauses
    ]
    _dump(args, payload, rows)
    return EXIT_OK


def cmd_generate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    _write(args, json.dumps(random_instance_doc(seed), indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write output to this path instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--tol", type=float, default=1e-9)
    common.add_argument("--seed", type=int, help="seed for random instance generation")

    def with_problem(p):
        p.add_argument("--problem", required=True,
                       help="problem JSON path, a bundled name, or 'random' (with --seed)")
        return p

    parser = argparse.ArgumentParser(prog="stablebilevel", description="Stabilized bilevel solver and harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = with_problem(sub.add_parser("solve", parents=[common], help="solve the lifted problem at one nu"))
    p.add_argument("--nu", type=int, required=True)
    p.add_argument("--oa", action="store_true", help="use outer approximation")
    p.add_argument("--minimal-lambda", action="store_true", help="report the smallest admissible lambda")
    p.set_defaults(func=cmd_solve)

    p = with_problem(sub.add_parser("sweep", parents=[common], help="convergence sweep over a nu range"))
    p.add_argument("--nu-from", type=int, required=True)
    p.add_argument("--nu-to", type=int, required=True)
    p.set_defaults(func=cmd_sweep)

    p = with_problem(sub.add_parser("naive", parents=[common], help="naive substitution baseline"))
    p.add_argument("--nu", type=int, required=True)
    p.set_defaults(func=cmd_naive)

    p = with_problem(sub.add_parser("oracle", parents=[common], help="brute-force bilevel oracle"))
    p.set_defaults(func=cmd_oracle)

    p = with_problem(sub.add_parser("calmness", parents=[common], help="calmness certificate"))
    p.add_argument("--x", required=True, help="comma-separated point, e.g. '1.5' or '1,2'")
    p.add_argument("--rho", type=float, help="certify on the X-grid ball of this radius")
    p.set_defaults(func=cmd_calmness)

    p = with_problem(sub.add_parser("validate", parents=[common], help="validate file and schedules"))
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", parents=[common], help="write a random finite instance")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProblemFileError as exc:
        print(f"problem file error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
