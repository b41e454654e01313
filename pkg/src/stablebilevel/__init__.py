"""Stable lifted formulations of optimistic bilevel problems on finite grids."""

from .baselines import solve_naive, solve_oracle, substituted_problem
from .calmness import (
    CalmnessCertificate,
    LocalCalmnessCertificate,
    certify_calm_at,
    certify_local_calm,
    finite_threshold,
    sufficient_constants,
)
from .expr import ExprDomainError, ExprError, ExprSyntaxError, eval_expr, parse_expr, to_string
from .geometry import FinitePoints, GridSpec, IntervalBox, Norm, UnionOfBoxes, distance, min_norm_correction
from .harness import ConvergenceReport, ProblemFileError, emit_report, load_problem, problem_from_dict, sweep
from .lowerlevel import check_bilevel_feasible, penalty_value_mu, tau_argmin, value_function_V
from .model import (
    ApproximationFamily,
    BilevelProblem,
    ParameterSchedule,
    Rate,
    StabilizedInstance,
    YNuRule,
    build_instance,
    validate_schedules,
)
from .solver import (
    OaTrace,
    SolveRecord,
    outer_approximation,
    phi_nu_eval,
    psi_0,
    psi_z,
    solve_stabilized_full,
)

__version__ = "0.1.0"
