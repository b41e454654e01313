import math

import pytest

from stablebilevel.calmness import (
    CALM,
    DEFAULT_LADDER,
    INCONCLUSIVE,
    NOT_CALM,
    certify_calm_at,
    certify_local_calm,
    finite_threshold,
    sufficient_constants,
)
from stablebilevel.harness import problem_from_dict
from stablebilevel.instances import worked_example_doc, random_instance_doc
from stablebilevel.lowerlevel import penalty_value_mu, value_function_V

from conftest import random_suite

SUITE = random_suite(30, start=1000)


def test_worked_calm_at_one(worked):
    cert = certify_calm_at(worked[0], (1.0,), [0.0, 1.0, 2.0])
    assert cert.status == CALM and cert.threshold == 0.0 and cert.gap == 0.0


def test_worked_sufficient_constants(worked):
    k1, k2, lam = sufficient_constants(worked[0], (1.0,))
    assert k1 == 1.0 and k2 == 0.0 and lam == 0.0


def test_worked_local_calm(worked):
    cert = certify_local_calm(worked[0], (1.0,), 0.5)
    assert cert.status == CALM and cert.threshold == 0.0
    assert len(cert.samples) == 51 and max(cert.gaps) == 0.0


def test_tiny_radius_is_pointwise(worked):
    cert = certify_local_calm(worked[0], (1.5,), 1e-6)
    assert cert.samples == ((1.5,),)
    point = certify_calm_at(worked[0], (1.5,))
    assert (cert.status, cert.threshold) == (point.status, point.threshold)


def test_no_sample_raises(worked):
    with pytest.raises(ValueError):
        certify_local_calm(worked[0], (5.0,), 0.1)


def _empty_lower_level():
    doc = worked_example_doc(x_resolution=3)
    doc["constraints"]["H"] = ["y1 + 1"]
    return problem_from_dict(doc)[0]


def test_empty_feasible_set_not_calm():
    p = _empty_lower_level()
    cert = certify_calm_at(p, (1.0,), [0.0, 1.0, 10.0])
    assert cert.status == NOT_CALM and cert.threshold == 10.0 and cert.gap == math.inf
    assert finite_threshold(p, (1.0,)) == math.inf
    with pytest.raises(ValueError):
        sufficient_constants(p, (1.0,))


def test_empty_ladder_inconclusive(worked):
    assert certify_calm_at(worked[0], (1.0,), []).status == INCONCLUSIVE
    with pytest.raises(ValueError):
        certify_calm_at(worked[0], (1.0,), [1.0, 0.5])


def test_single_point_Y():
    doc = worked_example_doc(x_resolution=3)
    doc["sets"]["Y"] = {"kind": "finite", "points": [[2]]}
    doc["constraints"]["H"] = ["y1 - 1"]
    p = problem_from_dict(doc)[0]
    # the only point is infeasible: S(x) empty
    with pytest.raises(ValueError):
        sufficient_constants(p, (1.0,))
    doc["constraints"]["H"] = ["y1 - 3"]
    p = problem_from_dict(doc)[0]
    assert sufficient_constants(p, (1.0,)) == (0.0, 0.0, 0.0)


def _positive_threshold_points():
    out = []
    for seed, p, _, _ in SUITE:
        for x in p.X_points:
            t = finite_threshold(p, x)
            if 0 < t < math.inf:
                out.append((seed, p, x, t))
    return out


POSITIVE = _positive_threshold_points()


def test_suite_has_positive_thresholds():
    assert len(POSITIVE) >= 10


@pytest.mark.parametrize("seed, p, _f, _s", SUITE)
def test_ladder_matches_closed_form(seed, p, _f, _s):
    for x in p.X_points:
        t = finite_threshold(p, x)
        if t == math.inf:
            continue
        ladder = sorted({0.0, t, t * 2, t + 1} | set(DEFAULT_LADDER))
        cert = certify_calm_at(p, x, ladder)
        assert cert.status == CALM
        # the closed form is the exact breakpoint, up to the value tolerance
        assert cert.threshold <= t
        below = [l for l in ladder if l < cert.threshold]
        if below:
            v = value_function_V(p, x)
            assert v - penalty_value_mu(p, x, below[-1]) > 1e-9


@pytest.mark.parametrize("seed, p, x, t", POSITIVE)
def test_exactness_equivalence(seed, p, x, t):
    v = value_function_V(p, x)
    cert = certify_calm_at(p, x, [0.0, t, 2 * t])
    assert cert.threshold == t
    for lam in (t, 1.5 * t, 10 * t, 1e6):
        assert abs(penalty_value_mu(p, x, lam) - v) <= 1e-9
    prev = -math.inf
    for lam in (0.0, 0.25 * t, 0.5 * t, 0.9 * t, t):
        gap = v - penalty_value_mu(p, x, lam)
        assert gap >= -1e-12
        if prev > -math.inf:
            assert gap <= prev
        prev = gap


@pytest.mark.parametrize("seed, p, _f, _s", SUITE)
def test_sufficient_threshold_is_sound(seed, p, _f, _s):
    for x in p.X_points:
        try:
            k1, k2, lam = sufficient_constants(p, x)
        except ValueError:
            continue
        assert lam >= finite_threshold(p, x) - 1e-9
        assert certify_calm_at(p, x, [lam]).status == CALM


@pytest.mark.parametrize("seed", [27, 16, 12])
def test_local_threshold_is_max_of_pointwise(seed):
    doc = random_instance_doc(seed)
    doc["sets"]["X"] = {"kind": "box", "intervals": [[-1, 1]], "grid": [9]}
    p = problem_from_dict(doc)[0]
    x_bar = (0.0,)
    cert = certify_local_calm(p, x_bar, 0.25)
    assert cert.samples == ((-0.25,), (0.0,), (0.25,))
    point = [certify_calm_at(p, x) for x in cert.samples]
    if all(c.calm for c in point):
        assert cert.status == CALM
        assert cert.threshold == max(c.threshold for c in point)
        assert all(g <= 1e-9 for g in cert.gaps)
    else:
        assert cert.status == NOT_CALM
