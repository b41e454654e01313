"""Built-in problem documents and a seeded random-instance generator.

Everything here produces problem-file dictionaries (the JSON document
format read by :func:`stablebilevel.harness.problem_from_dict`), so bundled
files, generated instances and hand-written files share one loader.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "worked_example_doc",
    "noncompact_doc",
    "random_instance_doc",
]


def worked_example_doc(x_resolution: int = 101) -> dict:
    """One-dimensional instance where naive substitution is unstable.

    ``X = [1, 2]``, ``Y = {0, 1}``, ``D = (-inf, 0]``, ``f = (y - 1/2) x``,
    ``g = -x y``, ``H = y - 1`` perturbed to ``H^nu = y - 1 + 1/nu``.  The
    bilevel optimum is ``(1, 1)`` with value ``1/2``; the naive perturbed
    problem picks ``(2, 0)`` with value ``-1`` for every ``nu``.
    """
    return {
        "name": "example_sec3",
        "dims": {"n": 1, "m": 1, "q": 1},
        "sets": {
            "X": {"kind": "box", "intervals": [[1, 2]], "grid": [x_resolution]},
            "Y": {"kind": "finite", "points": [[0], [1]]},
            "D": {"kind": "box", "intervals": [["-inf", 0]]},
        },
        "norm": "L1",
        "tau": 0,
        "objectives": {"f": "(y1 - 1/2) * x1", "g": "-x1 * y1"},
        "constraints": {"H": ["y1 - 1"]},
        "family": {"H_nu": ["z1 - 1 + 1/nu"], "Y_nu_rule": {"kind": "full"}},
        "schedule": {
            "sigma": {"coef": 1, "power": 0.5},
            "theta": {"coef": 1, "power": 1 / 3},
            "lambda_bar": {"coef": 1, "power": 1 / 3},
            "tau_nu": 0,
            "delta_rate": 0,
            "eta_rate": {"coef": 1, "power": -1},
        },
    }


def noncompact_doc(radius: float = 10.0, resolution: int = 41) -> dict:
    """Truncation ``Y_R = [-R, R]`` of an instance with noncompact ``Y = R``.

    ``g = -y``, ``H = min(y + 1, exp(-y))``, ``D = (-inf, 0]``.  The
    constrained lower-level value is ``1`` (at ``y = -1``) while the
    penalized value decreases without bound as ``R`` grows, for any fixed
    penalty.  Keep ``R`` below ~700 so ``exp`` stays finite.
    """
    return {
        "name": "noncompact_counterexample",
        "dims": {"n": 1, "m": 1, "q": 1},
        "sets": {
            "X": {"kind": "finite", "points": [[0]]},
            "Y": {"kind": "box", "intervals": [[-radius, radius]], "grid": [resolution]},
            "D": {"kind": "box", "intervals": [["-inf", 0]]},
        },
        "norm": "L1",
        "tau": 0,
        "objectives": {"f": "y1", "g": "-y1"},
        "constraints": {"H": ["min(y1 + 1, exp(-y1))"]},
        "family": {"Y_nu_rule": {"kind": "full"}},
        "schedule": {
            "sigma": {"coef": 1, "power": 0.5},
            "theta": {"coef": 1, "power": 1 / 3},
            "lambda_bar": {"coef": 1, "power": 1 / 3},
            "delta_rate": 0,
            "eta_rate": 0,
        },
    }


def _coef(rng, scale=2.0) -> float:
    # quarter-integers keep hand checks and printed files readable
    return float(np.round(rng.uniform(-scale, scale) * 4) / 4)


def _affine(rng, names, scale=2.0) -> str:
    terms = [repr(_coef(rng, scale))]
    for name in names:
        c = _coef(rng, scale)
        if c != 0.0:
            terms.append(f"{c!r}*{name}")
    return " + ".join(f"({t})" for t in terms)


def random_instance_doc(
    seed: int,
    max_x: int = 6,
    max_y: int = 6,
    max_q: int = 2,
    m: int | None = None,
    union_d: bool | None = None,
    perturb: bool = True,
    norm: str | None = None,
) -> dict:
    """Random finite instance with ``|X| <= max_x``, ``|Y| <= max_y``, ``q <= max_q``.

    Data are affine/bilinear with quarter-integer coefficients; the family
    perturbs ``g`` and ``H`` by ``c/nu`` offsets.  Deterministic in ``seed``.
    """
    rng = np.random.default_rng(seed)
    m = int(m if m is not None else rng.integers(1, 3))
    q = int(rng.integers(1, max_q + 1))
    nx = int(rng.integers(2, max_x + 1)) if max_x >= 2 else 1
    ny = int(rng.integers(2, max_y + 1)) if max_y >= 2 else 1
    xs = sorted({float(np.round(v * 4) / 4) for v in rng.uniform(-2, 2, size=3 * nx)})[:nx]
    half = 3
    while (2 * half + 1) ** m < ny:
        half += 1
    ys = []
    seen = set()
    while len(ys) < ny:
        p = tuple(float(v) for v in rng.integers(-half, half + 1, size=m) / 2)
        if p not in seen:
            seen.add(p)
            ys.append(list(p))
    ynames = [f"y{i + 1}" for i in range(m)]
    bilinear = [f"x1*{n}" for n in ynames]
    g = _affine(rng, ynames + bilinear)
    f = _affine(rng, ["x1"] + ynames + bilinear[:1])
    # H_j(x, y) <= 0 with a nonpositive offset: most y feasible, some not
    H = [f"{_affine(rng, ynames + ['x1'], 1.0)} + ({-abs(_coef(rng, 1.0))!r})" for _ in range(q)]
    if union_d is None:
        union_d = q == 1 and bool(rng.integers(0, 3) == 0)
    if union_d:
        D = {"kind": "union", "boxes": [[["-inf", 0]], [[1, 1.5]]]}
    else:
        D = {"kind": "box", "intervals": [["-inf", 0] for _ in range(q)]}
    doc = {
        "name": f"random_finite_seed{seed}",
        "dims": {"n": 1, "m": m, "q": q},
        "sets": {
            "X": {"kind": "finite", "points": [[x] for x in xs]},
            "Y": {"kind": "finite", "points": ys},
            "D": D,
        },
        "norm": norm or str(rng.choice(["L1", "L2", "LINF"])),
        "tau": float(rng.choice([0.0, 0.0, 0.25])),
        "objectives": {"f": f, "g": g},
        "constraints": {"H": H},
        "family": {"Y_nu_rule": {"kind": "full"}},
        "schedule": {
            "sigma": {"coef": 1, "power": 0.5},
            "theta": {"coef": 1, "power": 1 / 3},
            "lambda_bar": {"coef": 1, "power": 1 / 3},
            "delta_rate": {"coef": 1, "power": -1},
            "eta_rate": {"coef": 1, "power": -1},
        },
    }
    if perturb:
        dg = _coef(rng, 1.0)
        doc["family"]["g_nu"] = f"{g} + ({dg!r})/nu"
        doc["family"]["H_nu"] = [f"{h} + ({_coef(rng, 1.0)!r})/nu" for h in H]
    return doc
