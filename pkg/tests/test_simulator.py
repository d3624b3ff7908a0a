import math

import numpy as np
import pytest

from predictorlab.errors import InvalidArgument, NotHurwitz, SimulationDiverged, UndefinedFit
from predictorlab.signals import ExogenousSignal, ZohSignal
from predictorlab.simulator import (HybridEventQueue, SimConfig, SimTrace, decay_fit,
                                    error_norm, run_closed_loop, run_monitors)


# --- event queue -------------------------------------------------------------

def test_queue_merges_and_orders_events():
    q = HybridEventQueue(holds=[0.0, 0.01, 0.02], samples=[0.01 + 5e-10, 0.015],
                         knots=[0.005, 0.02 + 2e-10], t_end=0.03)
    ev = list(q)
    assert [e.time for e in ev] == [0.0, 0.005, 0.01, 0.015, 0.02, 0.03]
    merged = ev[2]
    # the hold time is the canonical time and both actions happen there
    assert merged.time == 0.01 and merged.hold and merged.sample
    assert ev[3].sample and not ev[3].hold
    assert ev[4].hold and not ev[4].sample


def test_queue_for_run_has_no_sample_at_zero():
    q = HybridEventQueue.for_run(0.03, 0.01, 0.1, 0.25, 0.25, ExogenousSignal.zero(),
                                 ZohSignal([-0.5], [-2.0]))
    samples = [e.time for e in q if e.sample]
    holds = [e.time for e in q if e.hold]
    assert samples == pytest.approx([0.03, 0.06, 0.09])
    assert holds == pytest.approx([0.01 * j for j in range(10)])
    assert q.times[-1] == 0.1


def test_queue_sampling_gaps_follow_perturbation():
    b = ExogenousSignal.const(1.0)
    q = HybridEventQueue.for_run(0.03, 0.01, 0.2, 0.25, 0.25, b, ZohSignal([-0.5], [0.0]))
    samples = np.array([e.time for e in q if e.sample])
    assert np.diff(samples) == pytest.approx(0.03 / math.e)


# --- configuration -----------------------------------------------------------

def test_config_validation():
    with pytest.raises(InvalidArgument):
        SimConfig(h=0.005)
    with pytest.raises(InvalidArgument):
        SimConfig(theta=0.5)
    with pytest.raises(InvalidArgument):
        SimConfig(b=ExogenousSignal.sinusoid(1.0))
    with pytest.raises(InvalidArgument):
        SimConfig(predictor="magic")
    with pytest.raises(InvalidArgument):
        SimConfig(T1=0.0)


def test_run_rejects_inconsistent_configs():
    with pytest.raises(InvalidArgument):
        run_closed_loop(SimConfig(x0=(1.0, 1.0, 1.0), t_end=0.1))
    with pytest.raises(InvalidArgument):
        run_closed_loop(SimConfig(predictor="exact", t_end=0.1))
    with pytest.raises(NotHurwitz):
        run_closed_loop(SimConfig(p=(1.0, -1.0), t_end=0.1))


def test_input_history_validation():
    cfg = SimConfig(u0=((-0.4,), (1.0,)), t_end=0.1)
    with pytest.raises(InvalidArgument):
        run_closed_loop(cfg)
    cfg = SimConfig(u0=((-0.5, -0.2), (1.0, -1.0)), t_end=0.1, monitors=False)
    tr = run_closed_loop(cfg)
    assert tr.inputs.value(-0.3) == 1.0 and tr.inputs.value(-0.1) == -1.0


# --- short runs --------------------------------------------------------------

@pytest.fixture(scope="module")
def short_trace():
    return run_closed_loop(SimConfig(t_end=1.0, xi=ExogenousSignal.sinusoid(0.01, 5.0)))


def test_trace_layout(short_trace):
    tr = short_trace
    assert tr.header() == ["t", "x1", "x2", "z1", "z2", "w", "u", "y", "d", "xi",
                           "m24", "m214", "m223", "m224"]
    assert tr.t[0] == 0.0 and tr.t[-1] == 1.0
    assert np.all(np.diff(tr.t) > 0)
    assert np.max(np.diff(tr.t)) <= 1e-3 + 1e-12
    # every hold is a trace row
    for j in range(100):
        assert np.min(np.abs(tr.t - 0.01 * j)) < 1e-12


def test_control_is_held_between_updates(short_trace):
    tr = short_trace
    for j in range(1, 99):
        sel = (tr.t >= 0.01 * j - 1e-12) & (tr.t < 0.01 * (j + 1) - 1e-9)
        assert np.all(tr.u[sel] == tr.u[sel][0])
    # the applied (delayed) input is the initial history until tau
    early = tr.t < 0.25 - 1e-9
    assert np.all(tr.u_delayed[early] == -2.0)


def test_measurements_are_delayed_outputs(short_trace):
    tr = short_trace
    assert np.all(np.isnan(tr.y[tr.t < 0.03 - 1e-9]))
    for tau_i in (0.03, 0.3, 0.6):
        k = int(np.argmin(np.abs(tr.t - tau_i)))
        expected = tr.x_at([tau_i - 0.25])[0][0] + 0.01 * math.sin(5.0 * tau_i)
        assert tr.y[k] == pytest.approx(expected, abs=1e-12)
        assert tr.w[k] == tr.y[k]


def test_first_control_uses_the_predictor_from_initial_observer_state(short_trace):
    # z0 = 0 and u = -2 on the history: prediction is (int int u, int u) over the horizon
    u0 = short_trace.u[0]
    # l=1, m=2 from zero: X = (0, -0.5) after the first sub-interval, then
    # (0 + 0.25 * (-0.5 + 0), -0.5 - 0.5)
    expected = -15.0 * (0.25 * -0.5) - 8.0 * (-1.0)
    assert u0 == pytest.approx(expected, abs=1e-13)


def sgnsq(v):
    return v * abs(v) / math.sqrt(1.0 + v * v)


def brute_force_forced(t_end, h=1e-4):
    """Independent fixed-step simulation of the forced example (d = 0.5 sin t).

    Uses the explicit two-step form of the l=1, m=2 predictor and index
    arithmetic on a grid fine enough to contain every event.
    """
    T1, T2, r, tau = 0.03, 0.01, 0.25, 0.25
    N1, N2, Nd = round(T1 / h), round(T2 / h), round(r / h)
    U = {}

    def u_at(tt):
        return -2.0 if tt < 0 else U[math.floor(tt / T2 + 1e-9)]

    def integ(a, b):
        s, t = 0.0, a
        while t < b - 1e-12:
            nxt = min(0.0, b) if t < 0 else min((math.floor(t / T2 + 1e-9) + 1) * T2, b)
            s += (nxt - t) * u_at(t + 1e-12)
            t = nxt
        return s

    x = np.array([1.0, 1.0])
    z = np.zeros(2)
    w = 0.0
    xs = [x.copy()]
    steps = round(t_end / h)
    for k in range(steps):
        t = k * h
        if k % N1 == 0 and k > 0:
            w = (xs[k - Nd] if k >= Nd else np.array([1.0, 1.0]))[0]
        if k % N2 == 0:
            X1 = z[0] + 0.25 * (z[1] + sgnsq(z[0]))
            X2 = z[1] + integ(t - 0.5, t - 0.25)
            P1 = X1 + 0.25 * (X2 + sgnsq(X1))
            P2 = X2 + integ(t - 0.25, t)
            U[k // N2] = -15 * P1 - 8 * P2
        up, uo = u_at(t + h / 2 - tau), u_at(t + h / 2 - r - tau)

        def F(s, x, z, w):
            e = z[0] - w
            return (np.array([sgnsq(x[0]) + x[1] + 0.5 * math.sin(s), up]),
                    np.array([sgnsq(z[0]) + z[1] - 3 * e, -3 * e + uo]), sgnsq(z[0]) + z[1])

        a1 = F(t, x, z, w)
        a2 = F(t + h / 2, x + h / 2 * a1[0], z + h / 2 * a1[1], w + h / 2 * a1[2])
        a3 = F(t + h / 2, x + h / 2 * a2[0], z + h / 2 * a2[1], w + h / 2 * a2[2])
        a4 = F(t + h, x + h * a3[0], z + h * a3[1], w + h * a3[2])
        x = x + h / 6 * (a1[0] + 2 * a2[0] + 2 * a3[0] + a4[0])
        z = z + h / 6 * (a1[1] + 2 * a2[1] + 2 * a3[1] + a4[1])
        w = w + h / 6 * (a1[2] + 2 * a2[2] + 2 * a3[2] + a4[2])
        xs.append(x.copy())
    return np.array(xs)


def test_forced_run_matches_brute_force_oracle():
    t_end = 2.0
    ref = brute_force_forced(t_end)
    tr = run_closed_loop(SimConfig(t_end=t_end, h=1e-4, d=ExogenousSignal.sinusoid(0.5),
                                   monitors=False))
    probe = np.array([0.5, 1.0, 1.5, 2.0])
    got = tr.x_at(probe)
    want = ref[np.round(probe / 1e-4).astype(int)]
    assert np.max(np.abs(got - want)) < 1e-7


def test_divergence_is_reported_with_partial_trace():
    # a destabilising predictor-free design: slow holds with a huge gain
    cfg = SimConfig(k=(-400.0, -40.0), T2=0.2, T1=0.2, h=0.01, t_end=30.0, monitors=False)
    with pytest.raises(SimulationDiverged) as info:
        run_closed_loop(cfg)
    exc = info.value
    assert exc.trace is not None and len(exc.trace) > 0
    assert exc.last_time <= 30.0
    assert np.all(np.abs(exc.trace.x) <= 1e12)


def test_lti_closed_loop_with_exact_predictor():
    cfg = SimConfig(plant="lti", p=(-6.0, -8.0), k=(-8.0, -4.0), predictor="exact",
                    x0=(1.0, 0.0), u0=0.0, t_end=15.0)
    tr = run_closed_loop(cfg)
    assert error_norm(tr) < 1e-3
    rate, r2 = decay_fit(tr, 5.0, 15.0)
    assert rate > 0


def test_decay_fit_recovers_exponential_rate():
    t = np.linspace(0.0, 10.0, 201)
    x = np.column_stack([np.exp(-0.7 * t), np.zeros_like(t)])
    tr = SimTrace(t=t, x=x, z=np.zeros_like(x), w=t * 0, u=t * 0, u_delayed=t * 0, y=t * 0,
                  d=t * 0, xi=t * 0, r=0.0)
    # z - x(t - 0) = -x so the fitted quantity is 2 exp(-0.7 t)
    rate, r2 = decay_fit(tr, 2.0, 8.0)
    assert rate == pytest.approx(0.7, rel=1e-6)
    assert r2 == pytest.approx(1.0)
    zero = SimTrace(t=t, x=0 * x, z=0 * x, w=t * 0, u=t * 0, u_delayed=t * 0, y=t * 0,
                    d=t * 0, xi=t * 0, r=0.0)
    with pytest.raises(UndefinedFit):
        decay_fit(zero, 2.0, 8.0)
    with pytest.raises(InvalidArgument):
        decay_fit(tr, 5.0, 5.0)


def test_monitors_hold_on_short_run(short_trace):
    minima = short_trace.meta["monitor_minima"]
    assert set(minima) == {"m24", "m214", "m223", "m224"}
    assert all(v >= -1e-6 for v in minima.values())
    rep = run_monitors(short_trace, None, short_trace.meta["config"])
    assert rep.passed()
    assert rep.constants.rho == pytest.approx((2 * 4 * math.sqrt(2) / (3 * math.sqrt(3)) + 1) / 4)


def test_monitors_need_config(short_trace):
    with pytest.raises(InvalidArgument):
        run_monitors(short_trace, None, None)


def test_noise_signals_depend_on_seed():
    base = dict(t_end=0.3, monitors=False, xi=ExogenousSignal.noise(0.05, seed=1))
    a = run_closed_loop(SimConfig(seed=1, **base))
    b = run_closed_loop(SimConfig(seed=1, **base))
    c = run_closed_loop(SimConfig(seed=2, **base))
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != c.to_csv()


def test_csv_floats_round_trip(short_trace, tmp_path):
    path = tmp_path / "trace.csv"
    text = short_trace.to_csv(path)
    assert path.read_bytes() == text.encode()
    rows = text.splitlines()
    assert rows[0].startswith("t,x1,x2,z1,z2,w,u,y,d,xi,m24")
    values = [float(v) for v in rows[5].split(",")]
    assert values[1] == short_trace.x[4, 0]
    assert values[0] == short_trace.t[4]
