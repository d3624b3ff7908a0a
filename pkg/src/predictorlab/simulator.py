"""Deterministic hybrid closed-loop simulation.

The plant, the sampled observer and the ZOH predictor feedback are
integrated together with fixed-step RK4.  Three kinds of time instants cut
the time axis into smooth pieces:

* holds ``j T2`` where a new control value is computed,
* samples ``tau_{i+1} = tau_i + T1 exp(-b(tau_i))`` where ``w`` is reset,
* knots where an input seen by the plant or observer changes (input
  switches delayed by ``tau`` and ``r + tau``, breakpoints of ``d``).

Every piece is integrated with the fewest equal steps not exceeding ``h``,
so no step straddles an event and every event time is a trace row.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .controller import FeedbackGains, check_hurwitz, control_update, lti_control_update
from .errors import InvalidArgument, NotHurwitz, SimulationDiverged, UndefinedFit
from .observer import ObserverGains, observer_bound_margins
from .plant import (LtiPlant, StrictFeedbackPlant, catalog_get, observer_rate)
from .predictor import PredictorConfig, estimate_K, lti_predict, phi
from .signals import ExogenousSignal, StateHistory, ZohSignal, schedule_next

EVENT_TOL = 1e-9
DIVERGENCE_LIMIT = 1e12
MONITOR_TOL = 1e-6

_SIGNAL_ROLES = {"d": 1, "xi": 2, "b": 3}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class SimConfig:
    """Everything needed to reproduce one closed-loop run.

    ``u0`` is the initial input history on ``[-r - tau, 0)``: a number for a
    constant history or a ``(starts, values)`` pair of ZOH segments.  ``x0``
    is the (constant) initial state history on ``[-r, 0]``.  ``predictor`` is
    ``"approx"`` (successive approximations with ``l``, ``m``, ``n_q``) or
    ``"exact"`` (LTI plants only).  ``K`` is the predictor-error constant
    used by the bound monitors; ``None`` means twice the empirical estimate.
    """

    plant: str = "example4"
    r: float | None = None
    tau: float | None = None
    p: tuple = (-3.0, -3.0)
    theta: float = 1.0
    k: tuple = (-15.0, -8.0)
    predictor: str = "approx"
    l: int = 1
    m: int = 2
    n_q: int = 256
    T1: float = 0.03
    T2: float = 0.01
    t_end: float = 40.0
    h: float = 1e-3
    x0: tuple = (1.0, 1.0)
    u0: object = -2.0
    z0: tuple = (0.0, 0.0)
    w0: float = 0.0
    d: ExogenousSignal = field(default_factory=ExogenousSignal.zero)
    d_dir: tuple | None = None
    xi: ExogenousSignal = field(default_factory=ExogenousSignal.zero)
    b: ExogenousSignal = field(default_factory=ExogenousSignal.zero)
    monitors: bool = True
    K: float | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("T1", "T2", "t_end", "h"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidArgument(f"{name} must be a positive number, got {v!r}")
        if self.h > min(self.T1, self.T2) / 4.0 * (1 + 1e-12):
            raise InvalidArgument(f"h={self.h} must not exceed min(T1, T2)/4 = {min(self.T1, self.T2) / 4}")
        if self.theta < 1:
            raise InvalidArgument("theta must be >= 1")
        if self.predictor not in ("approx", "exact"):
            raise InvalidArgument(f"predictor must be 'approx' or 'exact', got {self.predictor!r}")
        if self.b.lower_bound() < 0:
            raise InvalidArgument("the schedule perturbation b must be non-negative")
        if self.K is not None and not (self.K >= 0):
            raise InvalidArgument("K must be non-negative")

    # derived objects ----------------------------------------------------
    def build_plant(self):
        return catalog_get(self.plant, self.r, self.tau)

    def signal(self, role: str) -> ExogenousSignal:
        """The signal for ``role`` with noise seeds tied to :attr:`seed`."""
        sig = getattr(self, role)
        if sig.kind != "noise":
            return sig
        ss = np.random.SeedSequence([int(self.seed), int(sig.seed), _SIGNAL_ROLES[role]])
        return replace(sig, seed=int(ss.generate_state(1)[0]), _cache=[])

    def predictor_config(self, plant) -> PredictorConfig:
        return PredictorConfig.for_plant(plant, self.l, self.m, self.n_q)

    def input_history(self, plant) -> ZohSignal:
        H = plant.r + plant.tau
        if isinstance(self.u0, (int, float)):
            return ZohSignal([-H], [float(self.u0)])
        starts, values = self.u0
        starts = [float(s) for s in starts]
        if starts[0] > -H + EVENT_TOL:
            raise InvalidArgument(f"u0 must start at or before {-H}")
        if starts[-1] >= 0:
            raise InvalidArgument("u0 segments must start before 0")
        starts[0] = min(starts[0], -H)
        return ZohSignal(starts, list(values))


# --------------------------------------------------------------------------
# events
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    time: float
    sample: bool = False
    hold: bool = False
    hold_index: int = -1
    sample_index: int = -1


class HybridEventQueue:
    """Merged, time-ordered holds, samples and integration knots.

    Instants closer than ``tol`` are merged; the merged time is the hold
    time if one is present, otherwise the sample time.  At a merged instant
    the sample is processed before the hold.
    """

    def __init__(self, holds, samples, knots, t_end: float, tol: float = EVENT_TOL):
        items = [(t, 0, j) for j, t in enumerate(holds)]
        items += [(t, 1, i) for i, t in enumerate(samples)]
        items += [(t, 2, -1) for t in knots]
        items.append((t_end, 2, -1))
        items = [it for it in items if 0.0 <= it[0] <= t_end + tol]
        items.sort(key=lambda it: (it[0], it[1]))
        events = []
        cluster = []

        def flush():
            if not cluster:
                return
            kinds = {c[1] for c in cluster}
            hold = next((c for c in cluster if c[1] == 0), None)
            samp = next((c for c in cluster if c[1] == 1), None)
            t = hold[0] if hold else (samp[0] if samp else cluster[0][0])
            events.append(Event(min(t, t_end), sample=1 in kinds, hold=0 in kinds,
                                hold_index=hold[2] if hold else -1,
                                sample_index=samp[2] if samp else -1))

        for it in items:
            if cluster and it[0] - cluster[0][0] > tol:
                flush()
                cluster = []
            cluster.append(it)
        flush()
        self.events = events

    @classmethod
    def for_run(cls, T1, T2, t_end, r, tau, b: ExogenousSignal, u0: ZohSignal,
                extra_knots=(), tol: float = EVENT_TOL):
        nh = int(math.floor(t_end / T2 + tol)) + 1
        holds = [j * T2 for j in range(nh) if j * T2 < t_end - tol]
        samples = []
        tau_i = 0.0
        while True:
            tau_i = schedule_next(tau_i, T1, float(b(tau_i)))
            if tau_i > t_end + tol:
                break
            samples.append(tau_i)
        knots = []
        for lag in (tau, r + tau):
            if lag > 0:
                knots += [t + lag for t in holds]
                knots += [s + lag for s in u0.breakpoints() if s + lag > 0]
        knots += list(extra_knots)
        return cls(holds, samples, knots, t_end, tol)

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    @property
    def times(self):
        return [e.time for e in self.events]


# --------------------------------------------------------------------------
# trace
# --------------------------------------------------------------------------

MONITOR_COLUMNS = ("m24", "m214", "m223", "m224")


@dataclass
class SimTrace:
    """Closed-loop trajectory sampled at every integrator node.

    Arrays are aligned with ``t``; ``u`` is the commanded input (current
    hold value), ``u_delayed`` the input acting on the plant, ``y``/``xi``
    the latest measurement and its error (NaN before the first sample).
    ``monitors`` maps the four bound monitors to per-row relative margins.
    """

    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    w: np.ndarray
    u: np.ndarray
    u_delayed: np.ndarray
    y: np.ndarray
    d: np.ndarray
    xi: np.ndarray
    r: float = 0.0
    tau: float = 0.0
    monitors: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    history: StateHistory | None = None
    inputs: ZohSignal | None = None
    holds: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def __len__(self):
        return len(self.t)

    def x_at(self, tq) -> np.ndarray:
        """Plant state at arbitrary times (initial history before 0)."""
        hist = self.history
        if hist is None:
            hist = StateHistory.from_samples(self.t, self.x)
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        lo = hist.t_first
        out = np.empty((tq.size, self.n))
        early = tq < lo
        out[early] = self.x[0] if self.history is None else hist.sample(lo)
        if np.any(~early):
            out[~early] = hist.sample_many(tq[~early])
        return out

    def delayed_x(self) -> np.ndarray:
        """``x(t - r)`` at every row."""
        return self.x_at(self.t - self.r)

    def header(self) -> list[str]:
        n = self.n
        return (["t"] + [f"x{i + 1}" for i in range(n)] + [f"z{i + 1}" for i in range(n)]
                + ["w", "u", "y", "d", "xi"] + list(MONITOR_COLUMNS))

    def to_csv(self, path=None) -> str:
        """Write the trace as CSV (shortest round-trip floats); returns the text."""
        nan_col = np.full(len(self.t), np.nan)
        cols = ([self.t] + [self.x[:, i] for i in range(self.n)]
                + [self.z[:, i] for i in range(self.n)]
                + [self.w, self.u, self.y, self.d, self.xi]
                + [self.monitors.get(name, nan_col) for name in MONITOR_COLUMNS])
        data = np.column_stack(cols)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.header())
        for row in data.tolist():
            writer.writerow([repr(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


class _Recorder:
    def __init__(self, n, capacity):
        self.n = n
        self.size = 0
        cap = max(int(capacity), 16)
        self.t = np.empty(cap)
        self.x = np.empty((cap, n))
        self.z = np.empty((cap, n))
        self.cols = np.empty((cap, 6))  # w, u, u_delayed, y, d, xi

    def _grow(self, need):
        cap = len(self.t)
        while cap < need:
            cap *= 2
        for name in ("t", "x", "z", "cols"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:])
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def add(self, ts, xs, zs, ws, u, u_del, y, ds, xi):
        m = len(ts)
        if self.size + m > len(self.t):
            self._grow(self.size + m)
        s = slice(self.size, self.size + m)
        self.t[s] = ts
        self.x[s] = xs
        self.z[s] = zs
        c = self.cols[s]
        c[:, 0] = ws
        c[:, 1] = u
        c[:, 2] = u_del
        c[:, 3] = y
        c[:, 4] = ds
        c[:, 5] = xi
        self.size += m

    def set_last(self, w=None, u=None, y=None, xi=None):
        k = self.size - 1
        for j, v in ((0, w), (1, u), (3, y), (5, xi)):
            if v is not None:
                self.cols[k, j] = v

    def trace(self, **kw) -> SimTrace:
        s = self.size
        c = self.cols[:s]
        return SimTrace(t=self.t[:s].copy(), x=self.x[:s].copy(), z=self.z[:s].copy(),
                        w=c[:, 0].copy(), u=c[:, 1].copy(), u_delayed=c[:, 2].copy(),
                        y=c[:, 3].copy(), d=c[:, 4].copy(), xi=c[:, 5].copy(), **kw)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def measure(x_hist: StateHistory, t_sample: float, r: float, xi_val: float) -> float:
    """Measurement ``x_1(t_sample - r) + xi``."""
    return float(x_hist.sample(t_sample - r)[0]) + float(xi_val)


def _k_cache_key(plant, m, n_q):
    return (plant.name, plant.r, plant.tau, m, n_q)


_K_CACHE: dict = {}


def default_K(plant, pcfg: PredictorConfig) -> float:
    """Twice the empirical predictor-error constant (cached per plant and ``m``)."""
    key = _k_cache_key(plant, pcfg.m, pcfg.n_q)
    if key not in _K_CACHE:
        _K_CACHE[key] = 2.0 * estimate_K(plant, pcfg, trials=50, seed=0)
    return _K_CACHE[key]


class _Loop:
    """Resolved objects for one run."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        plant = cfg.build_plant()
        self.plant = plant
        n = plant.n
        self.lti = isinstance(plant, LtiPlant)
        for name in ("p", "k", "x0", "z0"):
            if len(getattr(cfg, name)) != n:
                raise InvalidArgument(f"{name} must have {n} entries for plant {cfg.plant!r}")
        if self.lti:
            ok, ab = check_hurwitz(plant.A + np.outer(cfg.p, plant.c))
            if not ok:
                raise NotHurwitz(f"A + pc' is not Hurwitz (spectral abscissa {ab:.6g})")
            self.obs_gain = np.asarray(cfg.p, dtype=float)
            self.gains = FeedbackGains.for_plant(plant, cfg.k)
            n_dist = plant.G_mat.shape[1]
        else:
            self.obs = ObserverGains(cfg.p, cfg.theta)
            self.obs_gain = self.obs.scaled
            self.gains = FeedbackGains(cfg.k)
            n_dist = n
        if cfg.predictor == "exact" and not self.lti:
            raise InvalidArgument("the exact predictor is only available for LTI plants")
        self.exact = cfg.predictor == "exact"
        self.pcfg = None if self.exact else cfg.predictor_config(plant)
        d_dir = np.eye(n_dist)[0] if cfg.d_dir is None else np.asarray(cfg.d_dir, dtype=float)
        if d_dir.shape != (n_dist,):
            raise InvalidArgument(f"d_dir must have {n_dist} entries")
        self.d_dir = d_dir
        self.model = kernels.make_model(plant, self.obs_gain, d_dir)
        self.d = cfg.signal("d")
        self.xi = cfg.signal("xi")
        self.b = cfg.signal("b")
        self.u0 = cfg.input_history(plant)

    def control(self, z, u_rec, t):
        if self.exact:
            phi_val = lti_predict(self.plant, z, u_rec, t)
        else:
            phi_val = phi(self.plant, self.pcfg, z, u_rec, t)
        return float(self.gains.k @ phi_val), phi_val


# --------------------------------------------------------------------------
# main loop
# --------------------------------------------------------------------------

def run_closed_loop(cfg: SimConfig) -> SimTrace:
    """Simulate the closed loop described by ``cfg``.

    Raises :class:`SimulationDiverged` (carrying the partial trace) when a
    state component exceeds ``1e12`` in magnitude or becomes non-finite.
    """
    loop = _Loop(cfg)
    plant = loop.plant
    n = plant.n
    r, tau = plant.r, plant.tau
    H = r + tau
    t_end = float(cfg.t_end)
    h = float(cfg.h)

    queue = HybridEventQueue.for_run(cfg.T1, cfg.T2, t_end, r, tau, loop.b, loop.u0,
                                     loop.d.breakpoints(t_end))
    x = np.asarray(cfg.x0, dtype=float).copy()
    z = np.asarray(cfg.z0, dtype=float).copy()
    w = float(cfg.w0)
    hist = StateHistory.constant(x, -r, 0.0) if r > 0 else StateHistory.constant(x, 0.0, 0.0)
    u_rec = ZohSignal(list(loop.u0.starts), list(loop.u0.values))
    rec = _Recorder(n, int(t_end / h * 1.05) + len(queue) + 16)
    u_now = float(loop.u0.values[-1])
    y_last = math.nan
    xi_last = math.nan
    holds = []
    t = 0.0
    j_bar = int(math.ceil((r + cfg.T1) / cfg.T2 - EVENT_TOL))

    def fail(t_fail, msg):
        tr = rec.trace(r=r, tau=tau, history=hist, inputs=u_rec, holds=holds,
                       meta={"j_bar": j_bar, "diverged_at": t_fail})
        raise SimulationDiverged(t_fail, tr, msg)

    first = True
    for ev in queue:
        te = ev.time
        if te > t:
            dt = te - t
            nsteps = max(1, int(math.ceil(dt / h - 1e-9)))
            hs = dt / nsteps
            tm = t + 0.5 * dt
            u_pl = u_rec.value(tm - tau)
            u_ob = u_rec.value(tm - H)
            tq = t + np.arange(2 * nsteps + 1) * (0.5 * hs)
            tq[-1] = te
            tq_eval = tq.copy()
            # left limit at the end of the piece
            tq_eval[-1] = np.nextafter(te, -np.inf)
            dvals = np.asarray(loop.d(tq_eval), dtype=float)
            xs, ds, de, zs, ws = loop.model.integrate(x, z, w, hs, nsteps, u_pl, u_ob, dvals)
            ts = tq[2::2].copy()
            bad = ~(np.all(np.isfinite(xs), axis=1) & np.all(np.isfinite(zs), axis=1)
                    & np.isfinite(ws))
            big = ((np.max(np.abs(xs), axis=1) > DIVERGENCE_LIMIT)
                   | (np.max(np.abs(zs), axis=1) > DIVERGENCE_LIMIT)
                   | (np.abs(ws) > DIVERGENCE_LIMIT))
            if np.any(bad | big):
                kbad = int(np.argmax(bad | big))
                if kbad > 0:
                    hist.append_steps(ts[:kbad], xs[:kbad], ds[:kbad], de[:kbad])
                    rec.add(ts[:kbad], xs[:kbad], zs[:kbad], ws[:kbad], u_now, u_pl, y_last,
                            dvals[2:2 * kbad + 1:2], xi_last)
                last = float(ts[kbad - 1]) if kbad > 0 else t
                fail(last, f"state exceeded {DIVERGENCE_LIMIT:g} after t={last:.6g}")
            hist.append_steps(ts, xs, ds, de)
            rec.add(ts, xs, zs, ws, u_now, u_pl, y_last, loop.d(ts), xi_last)
            x, z, w = xs[-1].copy(), zs[-1].copy(), float(ws[-1])
            t = te
        if ev.sample:
            xi_last = float(loop.xi(te))
            y_last = measure(hist, te, r, xi_last)
            w = y_last
        if ev.hold:
            u_now, phi_val = loop.control(z, u_rec, te)
            if not math.isfinite(u_now) or abs(u_now) > DIVERGENCE_LIMIT:
                fail(te, f"control value {u_now!r} at t={te:.6g}")
            u_rec.append(te, u_now)
            holds.append((te, float(np.linalg.norm(phi_val)), float(np.linalg.norm(z)),
                          u_rec.sup_abs(te - H, te)))
        if first and te == 0.0:
            u_del0 = float(u_rec.value(-tau))
            rec.add([0.0], x[None, :], z[None, :], [w], u_now, u_del0, y_last,
                    [float(loop.d(0.0))], xi_last)
            first = False
        elif ev.sample or ev.hold:
            rec.set_last(w=w, u=u_now, y=y_last, xi=xi_last)

    tr = rec.trace(r=r, tau=tau, history=hist, inputs=u_rec, holds=holds,
                   meta={"j_bar": j_bar, "plant": plant.name, "n": n,
                         "backend": "compiled" if getattr(loop.model, "compiled", False) else "python"})
    tr.meta["config"] = cfg
    if cfg.monitors:
        rep = run_monitors(tr, None, cfg, loop=loop)
        tr.monitors = rep.margins
        tr.meta["monitor_minima"] = rep.minima
    return tr


# --------------------------------------------------------------------------
# monitors
# --------------------------------------------------------------------------

@dataclass
class MonitorReport:
    margins: dict
    minima: dict
    constants: object = None

    def passed(self, tol: float = MONITOR_TOL) -> bool:
        return all(v >= -tol for v in self.minima.values() if not math.isnan(v))


def _rel_margin(log_rhs, lhs):
    """``(rhs - lhs) / max(1, rhs)`` with ``rhs = exp(log_rhs)``, overflow-free."""
    log_rhs = np.asarray(log_rhs, dtype=float)
    lhs = np.asarray(lhs, dtype=float)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        big = log_rhs > 0
        out = np.where(big, 1.0 - lhs * np.exp(-np.where(big, log_rhs, 0.0)),
                       np.exp(np.minimum(log_rhs, 0.0)) - lhs)
    return out


def _safe_log(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(v)


def _zoh_running_sup(u: ZohSignal, a: float, ends) -> np.ndarray:
    """``sup |u|`` over ``[a, e)`` for every ``e`` in ``ends`` (0 for empty windows)."""
    S = u.starts
    V = np.abs(u.values)
    j0 = max(int(np.searchsorted(S, a, side="right")) - 1, 0)
    run = np.maximum.accumulate(V[j0:])
    ends = np.asarray(ends, dtype=float)
    jj = np.searchsorted(S, ends, side="left") - 1 - j0
    out = np.where(jj >= 0, run[np.clip(jj, 0, len(run) - 1)], 0.0)
    return np.where(ends > a, out, 0.0)


def _effective_lipschitz(plant):
    """``(L, G)`` of the plant viewed as a strict-feedback system."""
    if isinstance(plant, StrictFeedbackPlant):
        return plant.L, plant.G
    n = plant.n
    S = np.diag(np.ones(n - 1), 1)
    F = plant.A - S
    if np.any(np.abs(np.triu(F, 1)) > 0) or np.any(plant.B != np.eye(n)[-1]) \
            or np.any(plant.c != np.eye(n)[0]):
        return math.nan, math.nan
    return float(np.max(np.linalg.norm(F, axis=1))), float(np.linalg.norm(plant.G_mat, 2))


def run_monitors(trace: SimTrace, constants, cfg: SimConfig, loop=None) -> MonitorReport:
    """Per-row relative margins of the four theoretical bounds.

    ``forward`` (m24): plant growth bound; ``predictor`` (m214): predictor
    growth bound at hold times (carried between holds); ``observer``
    (m223): observer-state bound; ``closed_loop`` (m224): closed-loop growth
    bound.  ``constants`` may be a :class:`DerivedConstants`; by default it
    is computed from ``cfg``.  A minimum ``>= -1e-6`` means the bound held.
    """
    if trace.inputs is None or len(trace) == 0:
        raise InvalidArgument("monitors need a complete trace with its input record")
    if cfg is None:
        raise InvalidArgument("monitors need the run configuration")
    loop = loop or _Loop(cfg)
    plant = loop.plant
    n = plant.n
    L, G = _effective_lipschitz(plant)
    if math.isnan(L):
        nan = np.full(len(trace), np.nan)
        return MonitorReport({k: nan for k in MONITOR_COLUMNS}, {k: math.nan for k in MONITOR_COLUMNS})
    r, tau = plant.r, plant.tau
    H = r + tau
    c = (n + 1) * L + 3.0
    theta = 1.0 if loop.lti else cfg.theta
    p_raw = np.asarray(cfg.p, dtype=float)
    if constants is None:
        omega = observer_rate(L, n, theta, p_raw)
        beta = omega + c / 2.0
        if loop.exact:
            C = 0.0
        else:
            K = cfg.K if cfg.K is not None else default_K(plant, loop.pcfg)
            rho = loop.pcfg.rho(plant)
            C = K * rho ** (loop.pcfg.l + 1) / (1.0 - rho)
        Gamma = C + math.exp(c * H / 2.0)
    else:
        omega, beta, Gamma = constants.omega, constants.beta, constants.Gamma
    t = trace.t
    u_rec = trace.inputs
    ddir_norm = float(np.linalg.norm(loop.d_dir))
    dabs = np.abs(trace.d) * ddir_norm
    x0 = np.asarray(cfg.x0, dtype=float)
    x0n = float(np.linalg.norm(x0))
    z0 = np.asarray(cfg.z0, dtype=float)
    w0 = float(cfg.w0)
    xn = np.linalg.norm(trace.x, axis=1)
    zn = np.linalg.norm(trace.z, axis=1)
    u0_sup = loop.u0.sup_abs()

    # forward completeness bound
    sup_d_open = np.concatenate(([0.0], np.maximum.accumulate(dabs)[:-1]))
    sup_u_fwd = _zoh_running_sup(u_rec, -tau, t - tau)
    base = x0n + (G * sup_d_open + sup_u_fwd) / math.sqrt(c)
    m24 = _rel_margin(_safe_log(base) + c * t / 2.0, xn)

    # predictor growth bound at holds
    m214 = np.full(len(t), np.nan)
    if trace.holds:
        ht = np.array([hh[0] for hh in trace.holds])
        lhs = np.array([hh[1] for hh in trace.holds])
        rhs = Gamma * np.array([hh[2] + hh[3] for hh in trace.holds])
        hm = _rel_margin(_safe_log(rhs), lhs)
        idx = np.searchsorted(ht, t, side="right") - 1
        m214 = np.where(idx >= 0, hm[np.clip(idx, 0, None)], np.nan)

    # observer-state bound
    xi_t = np.abs(np.asarray(loop.xi(t), dtype=float))
    sup_xi = np.maximum.accumulate(xi_t)
    b_t = np.asarray(loop.b(t), dtype=float)
    sup_b = np.maximum.accumulate(b_t)
    sup_u_obs = _zoh_running_sup(u_rec, -H, t - H)
    cum_x = np.maximum.accumulate(xn)
    kx = np.searchsorted(t, t - r, side="right") - 1
    sup_x_lag = np.maximum(x0n, np.where(kx >= 0, cum_x[np.clip(kx, 0, None)], 0.0))
    z_rows = trace.z.copy()
    z_rows[0] = z0
    w_rows = trace.w.copy()
    w_rows[0] = w0
    margin, rhs = observer_bound_margins(t, z_rows, w_rows, sup_u_obs, sup_x_lag, sup_xi,
                                         sup_b, omega, cfg.T1)
    m223 = margin / np.maximum(1.0, rhs)

    # closed-loop growth bound
    lhs24 = (np.maximum.accumulate(zn + np.abs(trace.w)) + np.maximum(x0n, cum_x)
             + _zoh_running_sup(u_rec, -H, t))
    denom = -np.expm1(-2.0 * omega * cfg.T1 * np.exp(-sup_b))
    log_base = math.log(7.0 * (1.0 + Gamma)) + beta * cfg.T2 - 0.5 * np.log(denom)
    g = np.ceil(t / cfg.T2 - EVENT_TOL)
    g = np.maximum(g, 0.0)
    Xi = (float(np.linalg.norm(z0)) + abs(w0) + x0n + u0_sup + sup_xi
          + G * np.maximum.accumulate(dabs))
    m224 = _rel_margin(g * log_base + _safe_log(Xi), lhs24)

    margins = {"m24": m24, "m214": m214, "m223": m223, "m224": m224}
    minima = {k: (float(np.nanmin(v)) if np.any(np.isfinite(v)) else math.nan)
              for k, v in margins.items()}
    from .plant import DerivedConstants
    consts = DerivedConstants(omega=omega, beta=beta, Gamma=Gamma,
                              rho=math.nan if loop.exact else loop.pcfg.rho(plant),
                              C=Gamma - math.exp(c * H / 2.0))
    return MonitorReport(margins, minima, consts)


# --------------------------------------------------------------------------
# decay fit
# --------------------------------------------------------------------------

def decay_fit(trace: SimTrace, t_start: float, t_end: float) -> tuple[float, float]:
    """Least-squares exponential rate of ``|x(t)| + |z(t) - x(t - r)|`` on a window.

    Returns ``(rate, r_squared)`` where ``rate`` is minus the fitted slope of
    the logarithm (positive for decay).  Rows where the quantity is exactly
    zero are ignored.
    """
    if not t_end > t_start:
        raise InvalidArgument("decay_fit needs t_start < t_end")
    t = trace.t
    sel = (t >= t_start - EVENT_TOL) & (t <= t_end + EVENT_TOL)
    if not np.any(sel):
        raise InvalidArgument("decay window contains no trace rows")
    ts = t[sel]
    xd = trace.x_at(ts - trace.r)
    v = np.linalg.norm(trace.x[sel], axis=1) + np.linalg.norm(trace.z[sel] - xd, axis=1)
    keep = v > 0
    if np.count_nonzero(keep) < 2:
        raise UndefinedFit("the decay window is (almost) identically zero")
    ts, lv = ts[keep], np.log(v[keep])
    slope, intercept = np.polyfit(ts, lv, 1)
    resid = lv - (slope * ts + intercept)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(-slope), float(r2)


def error_norm(trace: SimTrace, row: int = -1) -> float:
    """``|x(t)| + |z(t) - x(t - r)|`` at one trace row."""
    tt = trace.t[row]
    xd = trace.x_at([tt - trace.r])[0]
    return float(np.linalg.norm(trace.x[row]) + np.linalg.norm(trace.z[row] - xd))
