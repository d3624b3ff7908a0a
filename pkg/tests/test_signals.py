import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predictorlab.errors import InvalidArgument, OutOfDomain
from predictorlab.signals import (ExogenousSignal, SamplingSchedule, StateHistory, ZohSignal,
                                  merge_times, schedule_next, shift_history)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@st.composite
def zoh_signals(draw, max_segments=8):
    k = draw(st.integers(1, max_segments))
    widths = draw(st.lists(st.floats(0.01, 2.0), min_size=k, max_size=k))
    start = draw(st.floats(-5, 5))
    starts = start + np.concatenate(([0.0], np.cumsum(widths[:-1])))
    values = draw(st.lists(finite, min_size=k, max_size=k))
    return ZohSignal(starts, values, end=start + float(np.sum(widths)))


# --- ZOH signals -----------------------------------------------------------

def test_zoh_value_is_right_continuous():
    u = ZohSignal([0.0, 1.0, 2.5], [3.0, -1.0, 2.0], end=4.0)
    assert u.value(0.0) == 3.0
    assert u.value(0.999) == 3.0
    assert u.value(1.0) == -1.0
    assert u.value(3.9) == 2.0
    with pytest.raises(OutOfDomain):
        u.value(4.0)
    with pytest.raises(OutOfDomain):
        u.value(-0.1)


def test_zoh_integral_hand_computed():
    u = ZohSignal([0.0, 1.0, 2.5], [3.0, -1.0, 2.0], end=4.0)
    # 3*1 - 1*1.5 + 2*1.5
    assert u.integral(0.0, 4.0) == pytest.approx(4.5, abs=1e-15)
    assert u.integral(0.5, 1.5) == pytest.approx(1.5 - 0.5, abs=1e-15)
    assert u.integral(2.0, 2.0) == 0.0


def test_zoh_rejects_bad_construction():
    with pytest.raises(InvalidArgument):
        ZohSignal([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(InvalidArgument):
        ZohSignal([0.0], [1.0, 2.0])
    with pytest.raises(InvalidArgument):
        ZohSignal([0.0], [math.nan])
    with pytest.raises(InvalidArgument):
        ZohSignal([0.0, 1.0], [1.0, 2.0], end=1.0)


def test_zoh_append_only_after_last_segment():
    u = ZohSignal([0.0], [1.0])
    u.append(0.5, 2.0)
    assert u.value(0.7) == 2.0
    with pytest.raises(InvalidArgument):
        u.append(0.5, 3.0)
    closed = ZohSignal([0.0], [1.0], end=1.0)
    with pytest.raises(InvalidArgument):
        closed.append(2.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(zoh_signals(), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_zoh_integral_is_additive(u, fa, fb, fc):
    a, b, c = sorted(u.start + f * (u.end - u.start) for f in (fa, fb, fc))
    total = u.integral(a, c)
    assert total == pytest.approx(u.integral(a, b) + u.integral(b, c), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(zoh_signals())
def test_zoh_cumulative_matches_integral_and_riemann_oracle(u):
    ts = np.linspace(u.start, u.end, 17)
    cum = u.cumulative(ts)
    for t, c in zip(ts, cum):
        assert c == pytest.approx(u.integral(u.start, t), abs=1e-10)
    # midpoint Riemann sum on a grid refined to every breakpoint is exact
    grid = np.unique(np.concatenate((u.starts, [u.end])))
    mids = 0.5 * (grid[:-1] + grid[1:])
    oracle = float(np.sum(np.diff(grid) * np.array([u.value(m) for m in mids])))
    assert cum[-1] == pytest.approx(oracle, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(zoh_signals(), st.floats(0.05, 1.0))
def test_shift_history_translates_values(u, frac):
    H = frac * (u.end - u.start)
    t_now = u.end
    v = shift_history(u, t_now, H)
    assert v.start == 0.0 and v.end == H
    for s in np.linspace(0.0, H, 9, endpoint=False):
        assert v.value(s) == u.value(t_now - H + s)
    assert v.integral(0.0, H) == pytest.approx(u.integral(t_now - H, t_now), abs=1e-9)


def test_shift_history_requires_coverage():
    u = ZohSignal([0.0], [1.0])
    with pytest.raises(InvalidArgument):
        shift_history(u, 0.5, 1.0)


@settings(max_examples=60, deadline=None)
@given(zoh_signals(), st.floats(0, 1), st.floats(0, 1))
def test_sup_abs_bounds_every_value_in_window(u, fa, fb):
    a, b = sorted(u.start + f * (u.end - u.start) for f in (fa, fb))
    s = u.sup_abs(a, b)
    if b <= a:
        assert s == 0.0
        return
    for t in np.linspace(a, b, 25, endpoint=False):
        assert abs(u.value(t)) <= s


def test_window_restricts_and_keeps_absolute_time():
    u = ZohSignal([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    w = u.window(0.5, 2.0)
    assert w.segments() == [(0.5, 1.0), (1.0, 2.0)]
    assert w.end == 2.0


# --- sampling schedule -------------------------------------------------------

def test_schedule_uniform_without_perturbation():
    times = SamplingSchedule(0.1).times(0.55)
    assert times == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4, 0.5])


def test_schedule_next_formula():
    assert schedule_next(1.0, 0.03, 1.0) == pytest.approx(1.0 + 0.03 / math.e, rel=1e-15)
    with pytest.raises(InvalidArgument):
        schedule_next(0.0, 0.03, -0.1)
    with pytest.raises(InvalidArgument):
        schedule_next(0.0, 0.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(0.0, 3.0))
def test_schedule_gaps_lie_between_bounds(T1, bmax):
    b = ExogenousSignal.sinusoid(bmax / 2, 1.7, 0.0, bmax / 2)
    times = np.array(SamplingSchedule(T1, b).times(50 * T1))
    gaps = np.diff(times)
    assert np.all(gaps <= T1 * (1 + 1e-12))
    assert np.all(gaps >= T1 * math.exp(-bmax) * (1 - 1e-12))


def test_merge_times_collapses_near_duplicates():
    assert merge_times([[0.0, 1.0], [1.0 + 1e-12, 2.0]]) == [0.0, 1.0, 2.0]


# --- state history -----------------------------------------------------------

def test_history_hermite_exact_for_cubics():
    f = lambda t: 1.0 - 2.0 * t + 0.5 * t ** 2 - 0.25 * t ** 3
    df = lambda t: -2.0 + t - 0.75 * t ** 2
    ts = np.linspace(0.0, 2.0, 5)
    h = StateHistory.from_samples(ts, f(ts), df(ts))
    tq = np.linspace(0.0, 2.0, 37)
    assert np.allclose(h.sample_many(tq)[:, 0], f(tq), atol=1e-13)
    assert h.sample(0.3)[0] == pytest.approx(f(0.3), abs=1e-13)


def test_history_secant_mode_is_piecewise_linear():
    h = StateHistory.from_samples([0.0, 1.0, 3.0], [[0.0], [2.0], [0.0]])
    assert h.sample(0.5)[0] == pytest.approx(1.0)
    assert h.sample(2.0)[0] == pytest.approx(1.0)


def test_history_constant_and_domain():
    h = StateHistory.constant([1.0, -1.0], -0.25, 0.0)
    assert np.array_equal(h.sample(-0.1), [1.0, -1.0])
    with pytest.raises(OutOfDomain):
        h.sample(0.1)
    assert h.sup_norm(-1.0, 1.0) == pytest.approx(math.sqrt(2))


def test_history_append_steps_orders_nodes():
    h = StateHistory.constant([0.0], -1.0, 0.0)
    h.append_steps(np.array([0.5, 1.0]), np.array([[0.5], [1.0]]),
                   np.ones((2, 1)), np.ones((2, 1)))
    assert h.sample(0.75)[0] == pytest.approx(0.75)
    with pytest.raises(InvalidArgument):
        h.append_steps(np.array([1.0]), np.array([[1.0]]), np.ones((1, 1)), np.ones((1, 1)))


# --- exogenous signals -------------------------------------------------------

def test_exogenous_kinds():
    assert ExogenousSignal.zero()(3.0) == 0.0
    assert ExogenousSignal.const(2.5)(1.0) == 2.5
    s = ExogenousSignal.sinusoid(0.5)
    assert s(math.pi / 2) == pytest.approx(0.5)
    pw = ExogenousSignal.piecewise([1.0, 2.0], [3.0, 4.0])
    assert pw(0.0) == 3.0 and pw(1.5) == 3.0 and pw(2.0) == 4.0
    assert pw.breakpoints(5.0) == [1.0, 2.0]


def test_noise_is_seeded_and_bounded():
    a = ExogenousSignal.noise(0.5, seed=3, offset=0.5)
    b = ExogenousSignal.noise(0.5, seed=3, offset=0.5)
    ts = np.linspace(0, 10, 1001)
    va, vb = a(ts), b(ts)
    assert np.array_equal(va, vb)
    assert va.min() >= 0.0 and va.max() <= 1.0
    assert a.lower_bound() == 0.0
    # held constant on cells
    assert a(0.001) == a(0.009)


def test_exogenous_dict_round_trip():
    for sig in (ExogenousSignal.sinusoid(0.5, 2.0, 0.1, 0.2), ExogenousSignal.noise(1.0, 7),
                ExogenousSignal.piecewise([1.0], [2.0]), ExogenousSignal.const(3.0)):
        assert ExogenousSignal.from_dict(sig.to_dict()) == sig


def test_exogenous_rejects_unknown_kind():
    with pytest.raises(InvalidArgument):
        ExogenousSignal("square")
