import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predictorlab.errors import InvalidArgument, UnknownPlant
from predictorlab.plant import (LtiPlant, StrictFeedbackPlant, Term, catalog_get, catalog_names,
                                contraction_factor, delay_free_rhs, derived_constants,
                                forward_bound, growth_coefficient, plant_rhs, sgnsq)
from predictorlab.predictor import PredictorConfig


def test_sgnsq_lipschitz_constant_matches_derivative_maximum():
    # derivative of x|x|/sqrt(1+x^2) is |x|(2 + x^2)/(1 + x^2)^{3/2}; maximise on a fine grid
    x = np.linspace(0.0, 20.0, 2_000_001)
    dmax = float(np.max(x * (2 + x * x) / (1 + x * x) ** 1.5))
    plant = catalog_get("example4")
    assert plant.L == pytest.approx(dmax, rel=1e-9)
    assert plant.L == pytest.approx(4 * math.sqrt(2) / (3 * math.sqrt(3)), rel=1e-15)


def test_sgnsq_is_odd_and_vanishes_at_zero():
    x = np.linspace(-5, 5, 101)
    assert np.allclose(sgnsq(-x), -sgnsq(x))
    assert sgnsq(0.0) == 0.0
    assert sgnsq(1.0) == pytest.approx(1 / math.sqrt(2))


def test_example4_structure(example4):
    assert example4.n == 2
    assert example4.r == 0.25 and example4.tau == 0.25
    assert example4.G == 1.0
    assert np.array_equal(example4.g_constant, [1.0, 0.0])


def test_plant_rhs_hand_computed(example4):
    x = np.array([1.0, 2.0])
    out = plant_rhs(example4, x, u_delayed=-3.0, d=np.array([0.5, 0.7]))
    assert out[0] == pytest.approx(1 / math.sqrt(2) + 2.0 + 0.5)
    assert out[1] == pytest.approx(-3.0)
    free = delay_free_rhs(example4, x, -3.0)
    assert free[0] == pytest.approx(1 / math.sqrt(2) + 2.0)


def test_audit_rejects_understated_lipschitz_constant():
    with pytest.raises(InvalidArgument):
        StrictFeedbackPlant.from_terms(1, [Term(0, 0, "sgnsq")], [1.0], L=0.5, G=1.0,
                                       r=0.1, tau=0.1)


def test_audit_rejects_understated_gain_bound():
    with pytest.raises(InvalidArgument):
        StrictFeedbackPlant.from_terms(1, [], [2.0], L=0.0, G=1.0, r=0.1, tau=0.1)


def test_structure_and_delay_validation():
    with pytest.raises(InvalidArgument):
        StrictFeedbackPlant.from_terms(2, [Term(0, 1, "tanh")], [1.0, 0.0], 1.0, 1.0, 0.1, 0.1)
    with pytest.raises(InvalidArgument):
        StrictFeedbackPlant.from_terms(1, [], [1.0], 0.0, 1.0, 0.0, 0.0)
    with pytest.raises(InvalidArgument):
        StrictFeedbackPlant(1, [lambda x: x[..., 0] + 1.0], [1.0], 1.0, 1.0, 0.1, 0.1)


def test_catalog():
    assert {"example4", "lti", "linear2"} <= set(catalog_names())
    with pytest.raises(UnknownPlant):
        catalog_get("nope")
    p = catalog_get("example4", r=0.1)
    assert p.r == 0.1 and p.tau == 0.25
    lti = catalog_get("lti", tau=0.3)
    assert isinstance(lti, LtiPlant) and lti.tau == 0.3


def test_contraction_factor(example4):
    assert contraction_factor(example4, 0.25) == pytest.approx((2 * example4.L + 1) * 0.25)


def test_derived_constants_closed_form(example4):
    cfg = PredictorConfig(l=1, m=2, T=0.25)
    dc = derived_constants(example4, 1.0, [-3.0, -3.0], cfg, K=0.1)
    L = example4.L
    omega = max(3 * L + 2 + 4 * 9, 1 + L * L) / 2
    c = 3 * L + 3
    rho = (2 * L + 1) * 0.25
    assert dc.omega == pytest.approx(omega)
    assert dc.beta == pytest.approx(omega + c / 2)
    assert dc.rho == pytest.approx(rho)
    assert dc.C == pytest.approx(0.1 * rho ** 2 / (1 - rho))
    assert dc.Gamma == pytest.approx(dc.C + math.exp(c * 0.5 / 2))
    assert growth_coefficient(example4) == pytest.approx(c)


def _rk4(fun, x, h, n):
    for _ in range(n):
        k1 = fun(x)
        k2 = fun(x + 0.5 * h * k1)
        k3 = fun(x + 0.5 * h * k2)
        k4 = fun(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(-3, 3), st.floats(-1, 1),
       st.floats(0.05, 1.5))
def test_forward_bound_dominates_trajectories(x0, u, d, t):
    plant = catalog_get("example4")
    dv = np.array([d, 0.0])
    x_t = _rk4(lambda x: plant_rhs(plant, x, u, dv), np.array(x0), t / 200, 200)
    bound = forward_bound(plant, float(np.linalg.norm(x0)), abs(d), abs(u), t)
    assert np.linalg.norm(x_t) <= bound


def test_forward_bound_argument_checks(example4):
    with pytest.raises(InvalidArgument):
        forward_bound(example4, -1.0, 0.0, 0.0, 1.0)
    with pytest.raises(InvalidArgument):
        forward_bound(example4, 1.0, 0.0, math.inf, 1.0)


def test_lti_dimension_checks():
    with pytest.raises(InvalidArgument):
        LtiPlant(np.eye(2), np.ones(3), np.eye(2), np.ones(2), 0.1, 0.1)
    p = catalog_get("lti")
    assert np.allclose(p.rhs(np.array([1.0, 0.0]), 1.0, np.zeros(2)), [0.0, 3.0])
