"""Successive-approximation predictor for the delay-free plant.

The horizon ``[0, r + tau]`` is split into ``m`` sub-intervals of length
``T``.  On each one the state is propagated by ``l`` Picard iterations
started from the constant function equal to the sub-interval's initial
state; the terminal value seeds the next sub-interval.  Iterates live on a
uniform grid; the drift is integrated with the composite trapezoid rule and
the input integral is computed exactly from the ZOH record.

For LTI plants :func:`lti_predict` evaluates the variation-of-constants
formula exactly (segment by segment, via an augmented matrix exponential).
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import kernels
from .errors import ContractionViolated, InvalidArgument
from .plant import LtiPlant, contraction_factor
from .signals import ZohSignal, shift_history

_COVER_TOL = 1e-9


@dataclass(frozen=True)
class PredictorConfig:
    """Picard depth ``l``, sub-interval count ``m`` and sub-interval length ``T``.

    ``n_q`` is the number of uniform quadrature cells per sub-interval.
    Prefer :meth:`for_plant`, which derives ``T = (r + tau)/m`` and checks
    the contraction condition.
    """

    l: int
    m: int
    T: float
    n_q: int = 256

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 1:
            raise InvalidArgument(f"l must be a positive integer, got {self.l}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidArgument(f"m must be a positive integer, got {self.m}")
        if int(self.n_q) != self.n_q or self.n_q < 2 or self.n_q % 2:
            raise InvalidArgument(f"n_q must be an even integer >= 2, got {self.n_q}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise InvalidArgument(f"T must be positive, got {self.T}")
        object.__setattr__(self, "l", int(self.l))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n_q", int(self.n_q))

    @classmethod
    def for_plant(cls, plant, l: int, m: int, n_q: int = 256, check: bool = True) -> "PredictorConfig":
        cfg = cls(l=l, m=m, T=(plant.r + plant.tau) / m, n_q=n_q)
        if check:
            cfg.check(plant)
        return cfg

    @property
    def horizon(self) -> float:
        return self.m * self.T

    def rho(self, plant) -> float:
        if isinstance(plant, LtiPlant):
            # Picard on x' = A x + B u contracts with factor |A| T
            return float(np.linalg.norm(plant.A, 2)) * self.T
        return contraction_factor(plant, self.T)

    def check(self, plant) -> None:
        """Raise :class:`ContractionViolated` unless ``(nL+1)T < 1``."""
        rho = self.rho(plant)
        if not rho < 1:
            raise ContractionViolated(
                f"contraction factor {rho:.6g} >= 1; increase m above {rho * self.m:.6g}")
        if abs(self.horizon - (plant.r + plant.tau)) > 1e-9 * max(1.0, plant.r + plant.tau):
            raise InvalidArgument("m T must equal r + tau for this plant")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a continuous function on ``N_q + 1`` uniform nodes over ``[0, T]``."""

    values: np.ndarray
    T: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3:
            raise InvalidArgument("GridFunction values must have shape (N_q + 1, n) with N_q >= 2")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("GridFunction values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, x0, T: float, n_q: int) -> "GridFunction":
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        return cls(np.tile(x0, (n_q + 1, 1)), T)

    @property
    def n_q(self) -> int:
        return self.values.shape[0] - 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_q + 1)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1].copy()


# kernel objects are cheap but not free to build; keep one per plant
_MODELS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _model(plant):
    m = _MODELS.get(plant)
    if m is None:
        m = kernels.make_model(plant)
        _MODELS[plant] = m
    return m


def _input_integrals(u: ZohSignal, offset: float, T: float, n_q: int) -> np.ndarray:
    """``int_offset^{offset + s_k} u`` at the nodes ``s_k = k T / n_q``."""
    s = np.linspace(0.0, T, n_q + 1)
    cum = u.cumulative(offset + s)
    return cum - cum[0]


def _check_cover(u: ZohSignal, a: float, b: float):
    if u.start > a + _COVER_TOL or (u.end is not None and u.end < b - _COVER_TOL):
        raise InvalidArgument(f"input does not cover [{a}, {b})")


def picard_step(plant, x_grid: GridFunction, u_seg: ZohSignal, T: float | None = None) -> GridFunction:
    """One successive-approximation step ``x -> x(0) + int (f(x) + A x + b u)``."""
    T = x_grid.T if T is None else T
    if T != x_grid.T:
        raise InvalidArgument("grid length does not match T")
    if x_grid.values.shape[1] != plant.n:
        raise InvalidArgument("grid dimension does not match the plant")
    _check_cover(u_seg, 0.0, T)
    U = _input_integrals(u_seg, 0.0, T, x_grid.n_q)
    out = _model(plant).picard_step(x_grid.values, U, T)
    return GridFunction(out, T)


def _q_operator(model, x0, U, l, T, n_q):
    grid = np.tile(x0, (n_q + 1, 1))
    for _ in range(l):
        grid = model.picard_step(grid, U, T)
    return grid[-1].copy()


def q_operator(plant, x0, u_seg: ZohSignal, l: int, T: float, n_q: int = 256) -> np.ndarray:
    """``l`` Picard steps from the constant grid at ``x0``; returns the value at ``T``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (plant.n,):
        raise InvalidArgument("x0 dimension does not match the plant")
    if l < 1:
        raise InvalidArgument("l must be >= 1")
    _check_cover(u_seg, 0.0, T)
    U = _input_integrals(u_seg, 0.0, T, n_q)
    return _q_operator(_model(plant), x0, U, l, T, n_q)


def predict(plant, cfg: PredictorConfig, x0, u_hist: ZohSignal) -> np.ndarray:
    """Chain ``m`` sub-interval maps over ``u_hist`` on ``[0, m T)``, first segment first."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape != (plant.n,):
        raise InvalidArgument("x0 dimension does not match the plant")
    rho = cfg.rho(plant)
    if not rho < 1:
        raise ContractionViolated(f"(nL+1)T = {rho:.6g} >= 1")
    H = cfg.horizon
    _check_cover(u_hist, 0.0, H)
    model = _model(plant)
    T, n_q = cfg.T, cfg.n_q
    s = np.linspace(0.0, T, n_q + 1)
    for i in range(cfg.m):
        t0 = i * T
        nodes = t0 + s
        if u_hist.end is not None:
            # (m-1)T + T may exceed the domain end by an ulp
            nodes = np.minimum(nodes, u_hist.end)
        cum = u_hist.cumulative(nodes)
        x = _q_operator(model, x, cum - cum[0], cfg.l, T, n_q)
    return x


def phi(plant, cfg: PredictorConfig, z, u_open_hist: ZohSignal, t_now: float | None = None) -> np.ndarray:
    """Estimate of ``x(t + tau)`` from ``z ~ x(t - r)`` and the inputs on ``[t - r - tau, t)``.

    ``t_now`` defaults to the end of ``u_open_hist``.
    """
    if t_now is None:
        if u_open_hist.end is None:
            raise InvalidArgument("t_now is required for an open-ended input record")
        t_now = u_open_hist.end
    v = shift_history(u_open_hist, t_now, cfg.horizon)
    return predict(plant, cfg, z, v)


def prop21_bound(plant, cfg: PredictorConfig, K: float, x_norm: float, sup_u: float) -> float:
    """Predictor error bound ``K rho^(l+1)/(1-rho) (|x| + sup|u|)``."""
    rho = cfg.rho(plant)
    if not rho < 1:
        raise ContractionViolated(f"(nL+1)T = {rho:.6g} >= 1")
    if K < 0 or x_norm < 0 or sup_u < 0:
        raise InvalidArgument("K, x_norm and sup_u must be non-negative")
    return K * rho ** (cfg.l + 1) / (1.0 - rho) * (x_norm + sup_u)


# --------------------------------------------------------------------------
# empirical error studies
# --------------------------------------------------------------------------

def random_draw(rng: np.random.Generator, n: int, horizon: float, x_max: float = 5.0,
                u_max: float = 5.0, max_segments: int = 6):
    """Random ``x0`` in the ball of radius ``x_max`` and a random ZOH input on ``[0, horizon)``."""
    direction = rng.normal(size=n)
    direction /= max(np.linalg.norm(direction), 1e-300)
    x0 = direction * x_max * rng.uniform() ** (1.0 / n)
    k = int(rng.integers(1, max_segments + 1))
    cuts = np.sort(rng.uniform(0.0, horizon, size=k - 1))
    starts = np.concatenate(([0.0], cuts))
    # keep starts strictly increasing even if two cuts coincide
    starts = np.unique(starts)
    values = rng.uniform(-u_max, u_max, size=starts.size)
    return x0, ZohSignal(starts, values, end=horizon)


def flow_oracle(plant, x0, u: ZohSignal, h_max: float = 1e-4) -> np.ndarray:
    """RK4 solution of the delay-free plant at the end of ``u``'s domain."""
    if u.end is None:
        raise InvalidArgument("oracle input must have a closed domain")
    starts = u.starts
    ends = np.append(starts[1:], u.end)
    return _model(plant).flow(np.asarray(x0, dtype=float), ends - starts, u.values, h_max)


def predictor_errors(plant, m: int, l_values, trials: int, seed: int, n_q: int = 256,
                     h_oracle: float = 1e-4):
    """Per-draw predictor errors against the RK4 oracle.

    Returns ``(errors, scales)``: ``errors[j, t]`` is ``|predict - oracle|``
    for ``l_values[j]`` on draw ``t``, ``scales[t] = |x0| + sup|u|``.  Draws
    with a zero scale are skipped.
    """
    l_values = [int(l) for l in l_values]
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    H = plant.r + plant.tau
    rng = np.random.default_rng(seed)
    errors, scales = [], []
    cfgs = [PredictorConfig.for_plant(plant, l, m, n_q) for l in l_values]
    for _ in range(trials):
        x0, u = random_draw(rng, plant.n, H)
        scale = float(np.linalg.norm(x0) + u.sup_abs())
        if scale == 0.0:
            continue
        ref = flow_oracle(plant, x0, u, h_oracle)
        errors.append([float(np.linalg.norm(predict(plant, c, x0, u) - ref)) for c in cfgs])
        scales.append(scale)
    return np.array(errors).T, np.array(scales)


def estimate_K_per_l(plant, m: int, l_values=range(1, 7), trials: int = 50, seed: int = 0,
                     n_q: int = 256) -> dict:
    """``{l: K_hat(l)}`` with ``K_hat(l) = max_draws err / (rho^(l+1)/(1-rho) (|x0| + sup|u|))``."""
    l_values = list(l_values)
    errs, scales = predictor_errors(plant, m, l_values, trials, seed, n_q)
    rho = PredictorConfig.for_plant(plant, 1, m, n_q).rho(plant)
    out = {}
    for j, l in enumerate(l_values):
        coef = rho ** (l + 1) / (1.0 - rho)
        out[l] = float(np.max(errs[j] / (coef * scales))) if scales.size else 0.0
    return out


def estimate_K(plant, cfg: PredictorConfig, trials: int = 50, seed: int = 0,
               l_values=range(1, 7)) -> float:
    """Empirical constant of the predictor error bound: max of the per-``l`` estimates."""
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    per_l = estimate_K_per_l(plant, cfg.m, l_values, trials, seed, cfg.n_q)
    return max(per_l.values())


# --------------------------------------------------------------------------
# exact LTI predictor
# --------------------------------------------------------------------------

class _SegmentPropagator:
    """``x -> e^{A d} x + (int_0^d e^{A s} ds) B u`` with a cache keyed by ``d``."""

    def __init__(self, A, B):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float).reshape(-1)
        n = self.A.shape[0]
        self._aug = np.zeros((n + 1, n + 1))
        self._aug[:n, :n] = self.A
        self._aug[:n, n] = self.B
        self._cache = {}

    def matrices(self, d: float):
        key = float(f"{d:.12e}")
        hit = self._cache.get(key)
        if hit is None:
            E = expm(self._aug * d)
            n = self.A.shape[0]
            hit = (E[:n, :n].copy(), E[:n, n].copy())
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def __call__(self, x, d, u):
        Ad, Bd = self.matrices(d)
        return Ad @ x + Bd * u


_PROPAGATORS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _propagator(plant: LtiPlant) -> _SegmentPropagator:
    p = _PROPAGATORS.get(plant)
    if p is None:
        p = _SegmentPropagator(plant.A, plant.B)
        _PROPAGATORS[plant] = p
    return p


def lti_predict(plant: LtiPlant, z, u_open_hist: ZohSignal, t_now: float | None = None) -> np.ndarray:
    """Exact ``x(t + tau)`` for the LTI plant from ``z = x(t - r)`` and the open input history."""
    if not isinstance(plant, LtiPlant):
        raise InvalidArgument("lti_predict needs an LtiPlant")
    x = np.asarray(z, dtype=float).reshape(-1)
    if x.shape != (plant.n,):
        raise InvalidArgument("state dimension does not match the plant")
    H = plant.r + plant.tau
    if t_now is None:
        if u_open_hist.end is None:
            raise InvalidArgument("t_now is required for an open-ended input record")
        t_now = u_open_hist.end
    v = shift_history(u_open_hist, t_now, H)
    prop = _propagator(plant)
    starts = v.starts
    ends = np.append(starts[1:], H)
    for a, b, u in zip(starts, ends, v.values):
        if b > a:
            x = prop(x, b - a, u)
    return x
