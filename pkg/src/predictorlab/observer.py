"""High-gain sampled-data observer and its LTI counterpart.

Between sampling times the observer integrates a copy of the delay-free
dynamics driven by ``u(t - r - tau)`` with output injection ``theta^i p_i
(c'z - w)``; ``w`` propagates the unavailable signal ``x_1(t - r)`` and is
reset to the fresh measurement at every sampling time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NotHurwitz
from .plant import LtiPlant, StrictFeedbackPlant


@dataclass(frozen=True, eq=False)
class ObserverGains:
    """Injection vector ``p`` and high-gain parameter ``theta >= 1``.

    Construction fails unless ``A + p c'`` (with ``A`` the shift matrix of
    dimension ``len(p)``) is Hurwitz.
    """

    p: np.ndarray
    theta: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(-1)
        object.__setattr__(self, "p", p)
        if not (self.theta >= 1 and math.isfinite(self.theta)):
            raise InvalidArgument(f"theta must be >= 1, got {self.theta}")
        n = p.size
        A = np.diag(np.ones(n - 1), 1)
        M = A.copy()
        M[:, 0] += p
        abscissa = float(np.max(np.linalg.eigvals(M).real))
        if not abscissa < 0:
            raise NotHurwitz(f"A + pc' is not Hurwitz (spectral abscissa {abscissa:.6g})")

    @property
    def n(self):
        return self.p.size

    @property
    def scaled(self) -> np.ndarray:
        """``(theta p_1, theta^2 p_2, ..., theta^n p_n)``."""
        return self.theta ** np.arange(1, self.n + 1) * self.p


@dataclass(frozen=True, eq=False)
class ObserverState:
    z: np.ndarray
    w: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(z)) and math.isfinite(self.w)):
            raise InvalidArgument("observer state must be finite")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", float(self.w))


def observer_rhs(plant: StrictFeedbackPlant, gains: ObserverGains, s: ObserverState,
                 u_lagged: float):
    """Continuous observer dynamics; ``u_lagged`` is ``u(t - r - tau)``.

    Returns ``(dz, dw)``.
    """
    n = plant.n
    if gains.n != n or s.z.shape != (n,):
        raise InvalidArgument("observer dimensions do not match the plant")
    z = s.z
    drift = plant.f_vec(z)
    drift[:-1] += z[1:]
    innov = z[0] - s.w
    dz = drift + gains.scaled * innov
    dz[-1] += u_lagged
    # for n == 1 the input enters the inter-sample predictor directly
    dw = float(drift[0]) + (u_lagged if n == 1 else 0.0)
    return dz, dw


def observer_jump(s: ObserverState, y: float) -> ObserverState:
    """Reset at a sampling time: ``z`` is kept, ``w`` becomes the measurement."""
    return ObserverState(s.z, y)


def lti_observer_rhs(plant: LtiPlant, gains_p, s: ObserverState, u_lagged: float):
    n = plant.n
    gains_p = np.asarray(gains_p, dtype=float).reshape(-1)
    if gains_p.shape != (n,) or s.z.shape != (n,):
        raise InvalidArgument("observer dimensions do not match the plant")
    Az = plant.A @ s.z
    innov = plant.c @ s.z - s.w
    dz = Az + plant.B * u_lagged + gains_p * innov
    dw = float(plant.c @ Az + plant.c @ plant.B * u_lagged)
    return dz, dw


def observer_bound_rhs(omega: float, T1: float, sup_b: float, z0_sq: float, sup_u_lag: float,
                       sup_x_lag: float, sup_xi: float) -> float:
    """Right-hand side of the observer-state growth bound."""
    denom = -math.expm1(-2.0 * omega * T1 * math.exp(-sup_b))
    return (z0_sq + sup_u_lag ** 2 / (2.0 * omega)
            + (sup_x_lag + sup_xi) ** 2 / denom)


def observer_bound_margins(t, z, w, u_lag_sup, x_lag_sup, xi_sup, b_sup, omega, T1):
    """Margins ``RHS - exp(-2 omega t)(|z|^2 + w^2)`` along a trajectory.

    All arguments after ``w`` except the constants are running suprema
    aligned with ``t`` (``u_lag_sup[k] = sup_{0<=s<t_k} |u(s - r - tau)|``,
    ``x_lag_sup[k] = sup_{0<=s<=t_k} |x(s - r)|`` etc.).  Returns
    ``(margin, rhs)`` arrays.
    """
    t = np.asarray(t, dtype=float)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    w = np.asarray(w, dtype=float)
    z0_sq = float(np.sum(z[0] ** 2) + w[0] ** 2)
    denom = -np.expm1(-2.0 * omega * T1 * np.exp(-np.asarray(b_sup, dtype=float)))
    rhs = (z0_sq + np.asarray(u_lag_sup) ** 2 / (2.0 * omega)
           + (np.asarray(x_lag_sup) + np.asarray(xi_sup)) ** 2 / denom)
    lhs = np.exp(-2.0 * omega * t) * (np.sum(z ** 2, axis=1) + w ** 2)
    return rhs - lhs, rhs


def observer_bound_monitor(window: dict, constants, T1: float, sup_b: float) -> float:
    """Minimum relative margin of the observer-state bound over a trace window.

    ``window`` must provide arrays ``t``, ``z``, ``w``, ``u_lag_sup``,
    ``x_lag_sup`` and ``xi_sup`` (running suprema, see
    :func:`observer_bound_margins`).  A value ``>= -tolerance`` means the
    bound held on this run.  Margins are divided by ``max(1, RHS)``.
    """
    needed = ("t", "z", "w", "u_lag_sup", "x_lag_sup", "xi_sup")
    missing = [k for k in needed if k not in window]
    if missing:
        raise InvalidArgument(f"observer monitor window lacks {missing}")
    lengths = {len(np.asarray(window[k])) for k in needed}
    if len(lengths) != 1 or 0 in lengths:
        raise InvalidArgument("observer monitor window arrays are empty or misaligned")
    margin, rhs = observer_bound_margins(window["t"], window["z"], window["w"],
                                         window["u_lag_sup"], window["x_lag_sup"],
                                         window["xi_sup"], sup_b, constants.omega, T1)
    return float(np.min(margin / np.maximum(1.0, rhs)))
