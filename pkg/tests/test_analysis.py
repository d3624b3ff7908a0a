import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predictorlab.analysis import (SweepSpec, design_report, fitted_ratio,
                                   predictor_convergence_study, run_sweep, worker_count)
from predictorlab.errors import ContractionViolated, InvalidArgument
from predictorlab.plant import catalog_get
from predictorlab.signals import ExogenousSignal
from predictorlab.simulator import SimConfig


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(1e-3, 1e3))
def test_fitted_ratio_recovers_geometric_sequences(q, c):
    ls = np.arange(1, 7)
    assert fitted_ratio(ls, c * q ** ls) == pytest.approx(q, rel=1e-9)


def test_fitted_ratio_ignores_zero_errors():
    assert fitted_ratio([1, 2, 3], [0.0, 0.0, 0.0]) == 0.0
    assert fitted_ratio([1, 2, 3], [0.1, 0.0, 0.001]) == pytest.approx(0.1)


def test_convergence_study_on_integrator_is_exact():
    curve = predictor_convergence_study(catalog_get("integrator"), 1, range(1, 4), trials=5)
    assert np.all(curve.max_errors < 1e-10)


def test_convergence_study_rejects_non_contractive_split():
    with pytest.raises(ContractionViolated):
        predictor_convergence_study(catalog_get("example4"), 1, range(1, 3), trials=2)


def test_sweep_spec_validation():
    base = SimConfig(t_end=1.0)
    with pytest.raises(InvalidArgument):
        SweepSpec(base, {})
    with pytest.raises(InvalidArgument):
        SweepSpec(base, {"K": [1.0]})
    with pytest.raises(InvalidArgument):
        SweepSpec(base, {"T1": []})
    with pytest.raises(InvalidArgument):
        SweepSpec(base, {"T1": [math.nan]})
    with pytest.raises(InvalidArgument):
        SweepSpec(base, {"T1": [0.01]}, criterion="fast")
    spec = SweepSpec(base, {"T1": [0.01, 0.02], "l": [1, 2, 3]})
    assert len(spec.points()) == 6
    assert spec.points()[1] == {"T1": 0.01, "l": 2}


def test_worker_count_respects_environment(monkeypatch):
    monkeypatch.setenv("PREDICTORLAB_THREADS", "3")
    assert worker_count(10) == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("PREDICTORLAB_THREADS", "0")
    assert worker_count(10) == 1
    monkeypatch.setenv("PREDICTORLAB_THREADS", "many")
    with pytest.raises(InvalidArgument):
        worker_count(4)
    monkeypatch.delenv("PREDICTORLAB_THREADS")
    assert 1 <= worker_count(4) <= 4


@pytest.fixture(scope="module")
def small_sweep():
    spec = SweepSpec(SimConfig(t_end=8.0, monitors=False),
                     {"T2": [0.01, 0.05], "d_amplitude": [0.0, 0.5]}, conditions=True)
    return run_sweep(spec, workers=1)


def test_sweep_rows_and_criteria(small_sweep):
    res = small_sweep
    assert len(res) == 4
    assert [r.index for r in res.rows] == [0, 1, 2, 3]
    assert all(res.successes())
    undisturbed = [r for r in res.rows if r.point["d_amplitude"] == 0.0]
    assert all(r.rate > 0 for r in undisturbed)
    assert all("holding.T2" in r.margins for r in res.rows)
    # a longer hold shrinks the holding margin
    m = {r.point["T2"]: r.margins["holding.T2"] for r in undisturbed}
    assert m[0.05] < m[0.01]


def test_sweep_csv(small_sweep):
    text = small_sweep.to_csv()
    header = text.splitlines()[0].split(",")
    assert header[:5] == ["index", "T2", "d_amplitude", "success", "rate"]
    assert "margin.holding.T2" in header
    assert len(text.splitlines()) == 5


def test_sweep_parallel_matches_serial():
    spec = SweepSpec(SimConfig(t_end=2.0, monitors=False), {"theta": [1.0, 2.0]},
                     conditions=False)
    a = run_sweep(spec, workers=1).to_csv()
    b = run_sweep(spec, workers=2).to_csv()
    assert a == b


def test_sweep_marks_divergent_points_failed():
    spec = SweepSpec(SimConfig(k=(-400.0, -40.0), T1=0.2, T2=0.2, h=0.01, t_end=30.0,
                               monitors=False), {"T2": [0.2]}, conditions=False)
    row = run_sweep(spec, workers=1).rows[0]
    assert not row.success
    assert row.sup_x == math.inf and "diverged" in row.error


def test_sweep_bounded_criterion_uses_disturbance_scale():
    base = SimConfig(t_end=6.0, monitors=False, d=ExogenousSignal.sinusoid(0.5))
    res = run_sweep(SweepSpec(base, {"d_amplitude": [0.5]}, criterion="bounded",
                              conditions=False), workers=1)
    assert res.rows[0].success
    res = run_sweep(SweepSpec(base, {"d_amplitude": [0.5]}, criterion="bounded", bound=1e-3,
                              conditions=False), workers=1)
    assert not res.rows[0].success


def test_design_report_contains_every_condition():
    rep, cert = design_report(SimConfig())
    assert rep.names() == ["lyapunov.tier1", "lyapunov.tier2", "sampling.T1", "holding.T2",
                           "sampling.theta", "highgain.theta", "predictor.accuracy"]
    assert cert.mu > 0
