import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predictorlab.errors import InvalidArgument, NotHurwitz
from predictorlab.observer import (ObserverGains, ObserverState, lti_observer_rhs,
                                   observer_bound_margins, observer_bound_monitor,
                                   observer_bound_rhs, observer_jump, observer_rhs)
from predictorlab.plant import catalog_get, delay_free_rhs


def test_gains_scaling():
    g = ObserverGains([-3.0, -3.0], theta=2.0)
    assert np.array_equal(g.scaled, [-6.0, -12.0])


def test_gains_require_hurwitz_injection():
    # shift + p c' = [[p1, 1], [p2, 0]]: characteristic polynomial s^2 - p1 s - p2
    with pytest.raises(NotHurwitz):
        ObserverGains([1.0, -1.0])
    with pytest.raises(NotHurwitz):
        ObserverGains([-1.0, 1.0])
    with pytest.raises(InvalidArgument):
        ObserverGains([-3.0, -3.0], theta=0.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-4, 4), min_size=2, max_size=2), st.floats(-5, 5))
def test_no_innovation_reproduces_delay_free_dynamics(z, u):
    plant = catalog_get("example4")
    gains = ObserverGains([-3.0, -3.0], theta=3.0)
    z = np.array(z)
    dz, dw = observer_rhs(plant, gains, ObserverState(z, z[0]), u)
    assert np.allclose(dz, delay_free_rhs(plant, z, u), atol=1e-14)
    # w propagates the first component: f1(z1) + z2
    assert dw == pytest.approx(float(plant.f_vec(z)[0]) + z[1])


def test_innovation_enters_through_scaled_gains(example4):
    gains = ObserverGains([-3.0, -2.0], theta=2.0)
    z = np.array([1.0, 0.5])
    dz0, _ = observer_rhs(example4, gains, ObserverState(z, 1.0), 0.0)
    dz1, _ = observer_rhs(example4, gains, ObserverState(z, 0.0), 0.0)
    # innovation z1 - w changes by +1
    assert np.allclose(dz1 - dz0, gains.scaled)


def test_scalar_plant_w_sees_the_input():
    plant = catalog_get("integrator")
    gains = ObserverGains([-2.0])
    _, dw = observer_rhs(plant, gains, ObserverState([0.3], 0.3), 1.5)
    assert dw == 1.5


def test_jump_resets_w_only():
    s = ObserverState([1.0, 2.0], 5.0)
    s2 = observer_jump(s, -1.0)
    assert np.array_equal(s2.z, s.z) and s2.w == -1.0
    with pytest.raises(InvalidArgument):
        ObserverState([math.nan], 0.0)


def test_lti_observer_rhs():
    plant = catalog_get("lti")
    s = ObserverState([1.0, -1.0], 0.5)
    dz, dw = lti_observer_rhs(plant, [-6.0, -8.0], s, 2.0)
    expected = plant.A @ s.z + plant.B * 2.0 + np.array([-6.0, -8.0]) * (1.0 - 0.5)
    assert np.allclose(dz, expected)
    assert dw == pytest.approx(plant.c @ (plant.A @ s.z) + plant.c @ plant.B * 2.0)


def test_bound_rhs_matches_vector_margins():
    omega, T1 = 20.0, 0.03
    rhs = observer_bound_rhs(omega, T1, 0.0, 2.0, 1.0, 3.0, 0.5)
    margin, rhs_v = observer_bound_margins([0.0], [[1.0, 1.0]], [0.0], [1.0], [3.0], [0.5],
                                           [0.0], omega, T1)
    assert rhs_v[0] == pytest.approx(rhs)
    assert margin[0] == pytest.approx(rhs - 2.0)


def test_bound_monitor_checks_window_and_reports_minimum():
    consts = SimpleNamespace(omega=20.0)
    window = {"t": [0.0, 1.0], "z": [[0.1, 0.1], [0.0, 0.0]], "w": [0.0, 0.0],
              "u_lag_sup": [0.0, 0.0], "x_lag_sup": [1.0, 1.0], "xi_sup": [0.0, 0.0]}
    assert observer_bound_monitor(window, consts, 0.03, 0.0) > 0
    del window["xi_sup"]
    with pytest.raises(InvalidArgument):
        observer_bound_monitor(window, consts, 0.03, 0.0)
