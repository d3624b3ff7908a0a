"""Parameter sweeps and empirical predictor-convergence studies."""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import (ConditionReport, FeedbackGains, check_design_conditions,
                         check_nonlinear_lyapunov, synthesize_certificates)
from .errors import InvalidArgument, PredictorLabError, SimulationDiverged
from .predictor import PredictorConfig, predictor_errors
from .signals import ExogenousSignal
from .simulator import SimConfig, decay_fit, default_K, run_closed_loop

AXES = ("T1", "T2", "theta", "l", "m", "d_amplitude")
CRITERIA = ("auto", "decay", "bounded")


@dataclass
class SweepSpec:
    """Cartesian grid over named axes around a base configuration.

    ``criterion`` is ``"decay"`` (fitted decay rate over the last 60% of the
    horizon is positive with r^2 >= 0.9), ``"bounded"`` (sup|x| over the
    last 30% at most ``bound``, default 10x the disturbance amplitude) or
    ``"auto"`` (decay for disturbance-free points, bounded otherwise).
    """

    base: SimConfig
    axes: dict
    criterion: str = "auto"
    bound: float | None = None
    conditions: bool = True

    def __post_init__(self):
        if not self.axes:
            raise InvalidArgument("a sweep needs at least one axis")
        for name, values in self.axes.items():
            if name not in AXES:
                raise InvalidArgument(f"unknown sweep axis {name!r}; expected one of {AXES}")
            if len(values) == 0:
                raise InvalidArgument(f"sweep axis {name!r} has no values")
            if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in values):
                raise InvalidArgument(f"sweep axis {name!r} has non-finite values")
        if self.criterion not in CRITERIA:
            raise InvalidArgument(f"criterion must be one of {CRITERIA}")

    def points(self) -> list[dict]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.axes.values())]


@dataclass
class SweepRow:
    index: int
    point: dict
    success: bool
    rate: float = math.nan
    r_squared: float = math.nan
    sup_x: float = math.nan
    margins: dict = field(default_factory=dict)
    error: str = ""


@dataclass
class SweepResult:
    axes: list
    rows: list

    def __len__(self):
        return len(self.rows)

    def successes(self) -> list[bool]:
        return [r.success for r in self.rows]

    def to_csv(self, path=None) -> str:
        margin_names = sorted({k for r in self.rows for k in r.margins})
        header = (["index"] + list(self.axes) + ["success", "rate", "r_squared", "sup_x"]
                  + [f"margin.{m}" for m in margin_names] + ["error"])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for r in self.rows:
            w.writerow([r.index] + [repr(float(r.point[a])) if a not in ("l", "m")
                                    else int(r.point[a]) for a in self.axes]
                       + [int(r.success), repr(r.rate), repr(r.r_squared), repr(r.sup_x)]
                       + [repr(r.margins.get(m, math.nan)) for m in margin_names] + [r.error])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _point_config(base: SimConfig, point: dict) -> SimConfig:
    changes = {k: v for k, v in point.items() if k in ("T1", "T2", "theta")}
    for k in ("l", "m"):
        if k in point:
            changes[k] = int(point[k])
    if "d_amplitude" in point:
        amp = float(point["d_amplitude"])
        d = base.d
        if d.kind in ("sinusoid", "noise"):
            changes["d"] = replace(d, amplitude=amp, _cache=[])
        elif d.kind == "constant":
            changes["d"] = ExogenousSignal.const(amp)
        else:
            changes["d"] = ExogenousSignal.sinusoid(amp) if amp != 0 else ExogenousSignal.zero()
    T1 = changes.get("T1", base.T1)
    T2 = changes.get("T2", base.T2)
    # keep every event interval resolved by at least four steps
    changes["h"] = min(base.h, min(T1, T2) / 4.0)
    changes["monitors"] = False
    return replace(base, **changes)


_CERT_CACHE: dict = {}


def _certificates(cfg: SimConfig, plant, q: float = 1.0, s: float = 1.0, grid_points: int = 4096):
    key = (cfg.plant, cfg.r, cfg.tau, tuple(cfg.k), tuple(cfg.p), q, s, grid_points)
    if key not in _CERT_CACHE:
        gains = FeedbackGains.for_plant(plant, cfg.k)
        _CERT_CACHE[key] = (gains, synthesize_certificates(plant, gains, cfg.p, q=q, s=s,
                                                           grid_points=grid_points))
    return _CERT_CACHE[key]


def design_report(cfg: SimConfig, q: float = 1.0, s: float = 1.0, K: float | None = None,
                  grid_points: int = 4096, lyapunov: bool = True):
    """Synthesize certificates for ``cfg`` and evaluate every design condition.

    ``K`` is the predictor-error constant; ``None`` uses twice the empirical
    estimate (zero for the exact predictor).  Returns ``(report, certificates)``.
    """
    plant = cfg.build_plant()
    gains, cert = _certificates(cfg, plant, q, s, grid_points)
    if cfg.predictor == "exact":
        pcfg = PredictorConfig(l=max(cfg.l, 1), m=max(cfg.m, 1),
                               T=(plant.r + plant.tau) / max(cfg.m, 1))
        K_hat = 0.0 if K is None else K
    else:
        pcfg = cfg.predictor_config(plant)
        K_hat = default_K(plant, pcfg) if K is None else K
    report = ConditionReport()
    if lyapunov:
        report.extend(check_nonlinear_lyapunov(plant, gains, cert, grid_points=grid_points,
                                               d_dir=cfg.d_dir))
    report.extend(check_design_conditions(plant, gains, cert, cfg.theta, cfg.T1, cfg.T2,
                                          pcfg, K_hat))
    return report, cert


def _condition_margins(cfg: SimConfig) -> dict:
    report, _ = design_report(cfg, K=cfg.K, lyapunov=False)
    return report.margins()


def _run_point(args) -> SweepRow:
    index, point, spec = args
    try:
        cfg = _point_config(spec.base, point)
    except PredictorLabError as exc:
        return SweepRow(index, point, False, error=f"config: {exc}")
    margins = {}
    if spec.conditions:
        try:
            margins = _condition_margins(cfg)
        except PredictorLabError as exc:
            margins = {}
            cond_err = str(exc)
        else:
            cond_err = ""
    else:
        cond_err = ""
    try:
        tr = run_closed_loop(cfg)
    except SimulationDiverged as exc:
        return SweepRow(index, point, False, sup_x=math.inf, margins=margins,
                        error=f"diverged at t={exc.last_time:.6g}")
    except PredictorLabError as exc:
        return SweepRow(index, point, False, margins=margins, error=str(exc))
    t_end = cfg.t_end
    crit = spec.criterion
    forced = cfg.d.kind != "zero" and cfg.d.sup_abs() > 0
    if crit == "auto":
        crit = "bounded" if forced else "decay"
    tail = tr.t >= 0.7 * t_end
    sup_x = float(np.max(np.linalg.norm(tr.x[tail], axis=1)))
    rate = r2 = math.nan
    try:
        rate, r2 = decay_fit(tr, 0.4 * t_end, t_end)
    except PredictorLabError:
        pass
    if crit == "decay":
        success = bool(rate > 0 and r2 >= 0.9)
        if not math.isfinite(rate):
            # an identically vanishing tail is the strongest form of decay
            success = sup_x == 0.0
    else:
        bound = spec.bound if spec.bound is not None else 10.0 * cfg.d.sup_abs()
        success = bool(sup_x <= bound)
    return SweepRow(index, point, success, rate, r2, sup_x, margins, cond_err)


def worker_count(n_tasks: int) -> int:
    env = os.environ.get("PREDICTORLAB_THREADS", "").strip()
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise InvalidArgument(f"PREDICTORLAB_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, n_tasks))


def run_sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Run every grid point; divergent or invalid points become failed rows."""
    tasks = [(i, pt, spec) for i, pt in enumerate(spec.points())]
    nw = worker_count(len(tasks)) if workers is None else max(1, min(workers, len(tasks)))
    if nw == 1:
        rows = [_run_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            rows = list(ex.map(_run_point, tasks))
    rows.sort(key=lambda r: r.index)
    return SweepResult(list(spec.axes), rows)


# --------------------------------------------------------------------------
# predictor convergence
# --------------------------------------------------------------------------

@dataclass
class ConvergenceCurve:
    l_values: list
    max_errors: np.ndarray
    rho: float
    fitted_ratio: float
    trials: int

    def strictly_decreasing(self) -> bool:
        e = self.max_errors
        return bool(np.all(np.diff(e) < 0))


def fitted_ratio(l_values, errors) -> float:
    """``exp`` of the least-squares slope of ``log(error)`` against ``l``."""
    errors = np.asarray(errors, dtype=float)
    l_values = np.asarray(l_values, dtype=float)
    keep = errors > 0
    if np.count_nonzero(keep) < 2:
        return 0.0
    slope = np.polyfit(l_values[keep], np.log(errors[keep]), 1)[0]
    return float(math.exp(slope))


def predictor_convergence_study(plant, m: int, l_range=range(1, 7), trials: int = 50,
                                seed: int = 0, n_q: int = 256) -> ConvergenceCurve:
    """Max predictor error over seeded draws for each ``l`` and the fitted geometric ratio."""
    l_values = list(l_range)
    cfg = PredictorConfig.for_plant(plant, 1, m, n_q)  # raises if rho >= 1
    errs, _ = predictor_errors(plant, m, l_values, trials, seed, n_q)
    max_err = np.max(errs, axis=1) if errs.size else np.zeros(len(l_values))
    return ConvergenceCurve(l_values, max_err, cfg.rho(plant), fitted_ratio(l_values, max_err),
                            trials)
