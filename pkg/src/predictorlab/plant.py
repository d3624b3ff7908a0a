"""Plant models: globally Lipschitz strict-feedback systems and LTI systems.

A strict-feedback plant of dimension ``n`` evolves as::

    dx_i/dt = f_i(x_1..x_i) + x_{i+1} + g_i(x, u) d_i        (i < n)
    dx_n/dt = f_n(x)        + g_n(x, u) d_n + u(t - tau)

with the measured output ``x_1`` delayed by ``r``.  ``f`` is written in
vector form as ``f(x) + A x + b u`` where ``A`` is the shift (superdiagonal)
matrix, ``b = e_n`` and ``c = e_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractionViolated, InvalidArgument, UnknownPlant

# nonlinearity kinds usable by the compiled kernels: name -> (code, fn, Lipschitz const)
_SGNSQ_LIP = 4.0 * math.sqrt(2.0) / (3.0 * math.sqrt(3.0))


def sgnsq(x):
    """``x^2 sgn(x) / sqrt(1 + x^2)``, globally Lipschitz with constant 4 sqrt(2)/(3 sqrt(3))."""
    return x * np.abs(x) / np.sqrt(1.0 + x * x)


NONLINEARITIES = {
    "linear": (0, lambda x: x, 1.0),
    "sgnsq": (1, sgnsq, _SGNSQ_LIP),
    "tanh": (2, np.tanh, 1.0),
    "sin": (3, np.sin, 1.0),
}


@dataclass(frozen=True)
class Term:
    """One separable summand ``coef * phi_kind(x_col)`` of ``f_row`` (0-based indices)."""

    row: int
    col: int
    kind: str
    coef: float = 1.0


def _shift_matrix(n):
    A = np.zeros((n, n))
    A[np.arange(n - 1), np.arange(1, n)] = 1.0
    return A


class StrictFeedbackPlant:
    """Globally Lipschitz strict-feedback plant with measurement and input delays.

    Parameters
    ----------
    n : int
        State dimension.
    f : sequence of callables
        ``f[i](xs)`` receives an array of shape ``(..., i+1)`` holding
        ``x_1..x_{i+1}`` and returns shape ``(...)``.
    g : sequence of callables or floats
        ``g[i](x, u)`` with ``x`` of shape ``(..., n)``; a float means a
        constant gain.
    L, G : float
        Declared Lipschitz constant of the ``f_i`` and bound on ``|g_i|``.
        Both are spot-audited numerically at construction.
    r, tau : float
        Measurement and input delays, ``r + tau > 0``.
    """

    def __init__(self, n: int, f: Sequence[Callable], g: Sequence, L: float, G: float,
                 r: float, tau: float, name: str = "custom", terms: Sequence[Term] | None = None,
                 audit: bool = True, audit_pairs: int = 256, audit_radius: float = 10.0,
                 audit_seed: int = 0):
        n = int(n)
        if n < 1:
            raise InvalidArgument("plant dimension must be positive")
        if len(f) != n or len(g) != n:
            raise InvalidArgument(f"need {n} f_i and {n} g_i, got {len(f)} and {len(g)}")
        if not (L >= 0 and G >= 0 and math.isfinite(L) and math.isfinite(G)):
            raise InvalidArgument("L and G must be finite and non-negative")
        if r < 0 or tau < 0 or not (r + tau > 0):
            raise InvalidArgument(f"delays need r, tau >= 0 and r + tau > 0 (got r={r}, tau={tau})")
        self.n = n
        self.name = name
        self._f = list(f)
        self._g = list(g)
        self.L = float(L)
        self.G = float(G)
        self.r = float(r)
        self.tau = float(tau)
        self.terms = tuple(terms) if terms is not None else None
        self.A = _shift_matrix(n)
        self.b = np.zeros(n)
        self.b[-1] = 1.0
        self.c = np.zeros(n)
        self.c[0] = 1.0
        self._check_origin()
        if audit:
            self.audit(audit_pairs, audit_radius, audit_seed)

    # construction helpers ------------------------------------------------
    @classmethod
    def from_terms(cls, n: int, terms: Sequence[Term], g_const: Sequence[float], L: float,
                   G: float, r: float, tau: float, name: str = "custom", **kw):
        """Plant whose ``f_i`` are sums of catalogued scalar nonlinearities.

        Such plants can be integrated by the compiled kernels.
        """
        terms = tuple(terms)
        for t in terms:
            if t.kind not in NONLINEARITIES:
                raise InvalidArgument(f"unknown nonlinearity {t.kind!r}")
            if not (0 <= t.col <= t.row < n):
                raise InvalidArgument(f"term {t} breaks the strict-feedback structure")

        def make_fi(i):
            mine = [t for t in terms if t.row == i]

            def fi(xs):
                xs = np.asarray(xs, dtype=float)
                out = np.zeros(xs.shape[:-1])
                for t in mine:
                    out = out + t.coef * NONLINEARITIES[t.kind][1](xs[..., t.col])
                return out
            return fi

        f = [make_fi(i) for i in range(n)]
        g = [float(v) for v in g_const]
        return cls(n, f, g, L, G, r, tau, name=name, terms=terms, **kw)

    # evaluation -----------------------------------------------------------
    def f_vec(self, x) -> np.ndarray:
        """``(f_1(x_1), ..., f_n(x_1..x_n))`` for ``x`` of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for i, fi in enumerate(self._f):
            out[..., i] = fi(x[..., : i + 1])
        return out

    def g_vec(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for i, gi in enumerate(self._g):
            out[..., i] = gi(x, u) if callable(gi) else gi
        return out

    @property
    def g_constant(self):
        """Constant gain vector, or ``None`` if any ``g_i`` is a function."""
        if any(callable(gi) for gi in self._g):
            return None
        return np.array(self._g, dtype=float)

    def linear_part(self):
        """``(A, b, c)`` of the delay-free chain."""
        return self.A, self.b, self.c

    def _check_origin(self):
        f0 = self.f_vec(np.zeros(self.n))
        if np.any(f0 != 0.0):
            raise InvalidArgument(f"f_i(0) must vanish, got {f0}")

    def audit(self, pairs: int = 256, radius: float = 10.0, seed: int = 0, tol: float = 1e-12):
        """Spot-check the declared constants ``L`` and ``G`` on random points."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-radius, radius, size=(pairs, self.n))
        z = x + rng.normal(scale=rng.uniform(1e-3, radius, size=(pairs, 1)), size=(pairs, self.n))
        fx, fz = self.f_vec(x), self.f_vec(z)
        for i in range(self.n):
            dist = np.linalg.norm(x[:, : i + 1] - z[:, : i + 1], axis=1)
            bad = np.abs(fx[:, i] - fz[:, i]) > self.L * dist + tol
            if np.any(bad):
                raise InvalidArgument(f"f_{i + 1} exceeds the declared Lipschitz constant L={self.L}")
        u = rng.uniform(-radius, radius, size=pairs)
        if np.any(np.abs(self.g_vec(x, u)) > self.G + tol):
            raise InvalidArgument(f"some |g_i| exceeds the declared bound G={self.G}")

    def __repr__(self):
        return (f"StrictFeedbackPlant(name={self.name!r}, n={self.n}, L={self.L:.6g}, "
                f"G={self.G:.6g}, r={self.r}, tau={self.tau})")


@dataclass(frozen=True, eq=False)
class LtiPlant:
    """``dx/dt = A x + B u(t - tau) + G_mat d``, output ``c'x(t - r)``."""

    A: np.ndarray
    B: np.ndarray
    G_mat: np.ndarray
    c: np.ndarray
    r: float
    tau: float
    name: str = "lti"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(-1)
        Gm = np.atleast_2d(np.asarray(self.G_mat, dtype=float))
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if A.shape != (n, n) or B.shape != (n,) or c.shape != (n,) or Gm.shape[0] != n:
            raise InvalidArgument("LtiPlant: inconsistent dimensions")
        if self.r < 0 or self.tau < 0 or not (self.r + self.tau > 0):
            raise InvalidArgument("LtiPlant: need r, tau >= 0 and r + tau > 0")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G_mat", Gm)
        object.__setattr__(self, "c", c)

    @property
    def n(self):
        return self.A.shape[0]

    def rhs(self, x, u_delayed, d):
        return self.A @ x + self.B * u_delayed + self.G_mat @ d


@dataclass(frozen=True)
class DerivedConstants:
    """Rates and gains computed from ``(L, n, theta, p, T, l, m, K)``.

    omega : observer growth rate of the observer-state bound
    beta : closed-loop growth rate ``omega + ((n+1)L + 3)/2``
    Gamma : predictor growth constant
    rho : Picard contraction factor ``(nL+1)T``
    C : predictor error coefficient ``K rho^(l+1) / (1 - rho)``
    """

    omega: float
    beta: float
    Gamma: float
    rho: float
    C: float
    K: float = 0.0


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def _vec(x, n, what):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise InvalidArgument(f"{what} must have shape ({n},), got {x.shape}")
    return x


def plant_rhs(p: StrictFeedbackPlant, x, u_delayed: float, d) -> np.ndarray:
    """Right-hand side of the delayed plant; ``u_delayed`` is ``u(t - tau)``."""
    x = _vec(x, p.n, "x")
    d = _vec(d, p.n, "d")
    out = p.f_vec(x)
    out[:-1] += x[1:]
    out += p.g_vec(x, u_delayed) * d
    out[-1] += u_delayed
    return out


def delay_free_rhs(p: StrictFeedbackPlant, x, u: float) -> np.ndarray:
    x = _vec(x, p.n, "x")
    out = p.f_vec(x)
    out[:-1] += x[1:]
    out[-1] += u
    return out


def growth_coefficient(p: StrictFeedbackPlant) -> float:
    """``(n+1)L + 3``, the exponent coefficient of the forward-completeness bound."""
    return (p.n + 1) * p.L + 3.0


def forward_bound(p: StrictFeedbackPlant, x0_norm: float, sup_d: float, sup_u: float,
                  t: float) -> float:
    """Upper bound on ``|x(t)|`` valid for every solution of the plant."""
    vals = (x0_norm, sup_d, sup_u, t)
    if not all(math.isfinite(v) for v in vals):
        raise InvalidArgument("forward_bound: non-finite argument")
    if min(vals) < 0:
        raise InvalidArgument("forward_bound: arguments must be non-negative")
    c = growth_coefficient(p)
    return (x0_norm + (p.G * sup_d + sup_u) / math.sqrt(c)) * math.exp(c * t / 2.0)


def observer_rate(L: float, n: int, theta: float, gains_p) -> float:
    gains_p = np.asarray(gains_p, dtype=float)
    i = np.arange(1, n + 1)
    hg = float(np.max(theta ** (2 * i) * gains_p ** 2))
    return max(L * (n + 1) + 2.0 + 2.0 * n * hg, 1.0 + L * L) / 2.0


def contraction_factor(p: StrictFeedbackPlant, T: float) -> float:
    return (p.n * p.L + 1.0) * T


def derived_constants(p: StrictFeedbackPlant, theta: float, gains_p, cfg, K: float) -> DerivedConstants:
    """Compute omega, beta, Gamma, rho and C.

    ``cfg`` only needs ``l`` and ``T`` attributes (a ``PredictorConfig``).
    """
    if theta < 1:
        raise InvalidArgument(f"theta must be >= 1, got {theta}")
    if K < 0:
        raise InvalidArgument("K must be non-negative")
    gains_p = _vec(gains_p, p.n, "observer gains p")
    rho = contraction_factor(p, cfg.T)
    if rho >= 1:
        raise ContractionViolated(f"(nL+1)T = {rho:.6g} >= 1")
    omega = observer_rate(p.L, p.n, theta, gains_p)
    c = growth_coefficient(p)
    beta = omega + c / 2.0
    C = K * rho ** (cfg.l + 1) / (1.0 - rho)
    Gamma = C + math.exp(c * (p.r + p.tau) / 2.0)
    return DerivedConstants(omega=omega, beta=beta, Gamma=Gamma, rho=rho, C=C, K=float(K))


# --------------------------------------------------------------------------
# catalog
# --------------------------------------------------------------------------

def _example4():
    return StrictFeedbackPlant.from_terms(
        2, [Term(0, 0, "sgnsq")], g_const=[1.0, 0.0], L=_SGNSQ_LIP, G=1.0,
        r=0.25, tau=0.25, name="example4")


def _linear2():
    return StrictFeedbackPlant.from_terms(
        2, [Term(0, 0, "linear")], g_const=[1.0, 0.0], L=1.0, G=1.0,
        r=0.25, tau=0.25, name="linear2")


def _chain2():
    return StrictFeedbackPlant.from_terms(
        2, [], g_const=[1.0, 0.0], L=0.0, G=1.0, r=0.25, tau=0.25, name="chain2")


def _integrator():
    return StrictFeedbackPlant.from_terms(
        1, [], g_const=[1.0], L=0.0, G=1.0, r=0.25, tau=0.25, name="integrator")


def _example3():
    return StrictFeedbackPlant.from_terms(
        3, [Term(0, 0, "sgnsq"), Term(1, 0, "tanh", 0.5), Term(2, 2, "sin", 0.5)],
        g_const=[1.0, 0.0, 0.5], L=_SGNSQ_LIP, G=1.0, r=0.1, tau=0.15, name="example3")


def _lti():
    return LtiPlant(A=np.array([[0.0, 1.0], [2.0, -1.0]]), B=np.array([0.0, 1.0]),
                    G_mat=np.eye(2), c=np.array([1.0, 0.0]), r=0.25, tau=0.25, name="lti")


_CATALOG = {
    "example4": _example4,
    "linear2": _linear2,
    "chain2": _chain2,
    "example3": _example3,
    "integrator": _integrator,
    "lti": _lti,
}


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def catalog_get(name: str, r: float | None = None, tau: float | None = None):
    """Return a fresh catalog plant, optionally with overridden delays.

    ``example4``: the two-dimensional plant with ``f(x_1) = x_1^2 sgn(x_1)
    / sqrt(1+x_1^2)``, disturbance entering the first equation and
    ``r = tau = 1/4``.  ``linear2``: same chain with ``f_1(x_1) = x_1``.
    ``chain2``: the double integrator; ``integrator``: the scalar
    integrator.  ``example3``: a three-state
    strict-feedback plant.  ``lti``: an unstable 2-state LTI plant.
    """
    try:
        plant = _CATALOG[name]()
    except KeyError:
        raise UnknownPlant(f"no catalog plant named {name!r}; known: {catalog_names()}") from None
    if r is None and tau is None:
        return plant
    r = plant.r if r is None else r
    tau = plant.tau if tau is None else tau
    if isinstance(plant, LtiPlant):
        return LtiPlant(plant.A, plant.B, plant.G_mat, plant.c, r, tau, plant.name)
    return StrictFeedbackPlant.from_terms(plant.n, plant.terms, plant.g_constant, plant.L,
                                          plant.G, r, tau, name=plant.name)
