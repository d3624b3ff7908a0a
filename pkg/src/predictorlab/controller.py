"""Sampled predictor feedback and the design-condition ledger.

The control law holds ``u = k' Phi(z(i T2), open input history)`` on every
interval ``[i T2, (i+1) T2)``.  The rest of the module synthesizes the
quadratic certificates (``P``, ``Q``, ``mu``, ``gamma``) used by the
sufficient stability conditions and evaluates those conditions numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractionViolated, InvalidArgument, NotHurwitz
from .plant import LtiPlant, StrictFeedbackPlant, _shift_matrix
from .predictor import PredictorConfig, lti_predict, phi

STRICT_TOL = 1e-12


# --------------------------------------------------------------------------
# linear algebra helpers
# --------------------------------------------------------------------------

def check_hurwitz(M) -> tuple[bool, float]:
    """``(is_hurwitz, spectral_abscissa)`` of a square matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgument("check_hurwitz needs a square matrix")
    if not np.all(np.isfinite(M)):
        raise InvalidArgument("check_hurwitz: non-finite entries")
    abscissa = float(np.max(np.linalg.eigvals(M).real))
    return abscissa < 0, abscissa


def solve_lyapunov(M, rhs_scale: float = 1.0) -> np.ndarray:
    """Symmetric ``Q`` with ``Q M + M' Q = -2 rhs_scale I`` for Hurwitz ``M``.

    Solved as the Kronecker-vectorised linear system
    ``(I (x) M' + M' (x) I) vec(Q) = -2 s vec(I)``; fine for ``n <= 10``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    if M.shape != (n, n):
        raise InvalidArgument("solve_lyapunov needs a square matrix")
    if n > 10:
        raise InvalidArgument("solve_lyapunov is meant for n <= 10")
    if not (rhs_scale > 0 and math.isfinite(rhs_scale)):
        raise InvalidArgument("rhs_scale must be positive")
    ok, abscissa = check_hurwitz(M)
    if not ok:
        raise NotHurwitz(f"Lyapunov equation has no positive definite solution "
                         f"(spectral abscissa {abscissa:.6g})")
    eye = np.eye(n)
    # column-major vec: vec(Q M) = (M' (x) I) vec(Q), vec(M' Q) = (I (x) M') vec(Q)
    K = np.kron(M.T, eye) + np.kron(eye, M.T)
    rhs = (-2.0 * rhs_scale * eye).reshape(-1, order="F")
    Q = np.linalg.solve(K, rhs).reshape(n, n, order="F")
    Q = 0.5 * (Q + Q.T)
    resid = np.linalg.norm(Q @ M + M.T @ Q + 2.0 * rhs_scale * eye)
    if resid > 1e-8 * max(1.0, np.linalg.norm(Q) * np.linalg.norm(M)):
        raise NotHurwitz(f"Lyapunov residual too large ({resid:.3g})")
    if np.min(np.linalg.eigvalsh(Q)) <= 0:
        raise NotHurwitz("Lyapunov solution is not positive definite")
    return Q


# --------------------------------------------------------------------------
# gains and certificates
# --------------------------------------------------------------------------

def _linear_part(plant):
    if isinstance(plant, LtiPlant):
        return plant.A, plant.B, plant.c
    return plant.linear_part()


@dataclass(frozen=True, eq=False)
class FeedbackGains:
    """State-feedback vector ``k``; ``A + b k'`` must be Hurwitz.

    ``A``/``b`` default to the chain of integrators of dimension ``len(k)``;
    use :meth:`for_plant` for LTI plants.
    """

    k: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float).reshape(-1)
        n = k.size
        A = _shift_matrix(n) if self.A is None else np.asarray(self.A, dtype=float)
        b = np.eye(n)[-1] if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape != (n, n) or b.shape != (n,):
            raise InvalidArgument("feedback gains do not match the plant dimension")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        ok, abscissa = check_hurwitz(self.closed_loop)
        if not ok:
            raise NotHurwitz(f"A + bk' is not Hurwitz (spectral abscissa {abscissa:.6g})")

    @classmethod
    def for_plant(cls, plant, k) -> "FeedbackGains":
        A, b, _ = _linear_part(plant)
        return cls(k, A, b)

    @property
    def n(self):
        return self.k.size

    @property
    def closed_loop(self) -> np.ndarray:
        return self.A + np.outer(self.b, self.k)


@dataclass(frozen=True, eq=False)
class DesignCertificates:
    """Quadratic certificates for the stability conditions.

    ``P`` certifies the state-feedback loop with decay rate ``mu`` and
    disturbance gain ``gamma``; ``Q`` with level ``q`` certifies the
    observer error dynamics.  ``p`` records the observer gains ``Q`` was
    built for; ``mu_source`` says how ``mu`` was obtained.
    """

    P: np.ndarray
    mu: float
    gamma: float
    Q: np.ndarray
    q: float
    p: np.ndarray | None = None
    eps: float = 0.0
    mu_source: str = "given"

    def __post_init__(self):
        for name in ("P", "Q"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
                raise InvalidArgument(f"{name} must be a symmetric square matrix")
            if np.min(np.linalg.eigvalsh(M)) <= 0:
                raise InvalidArgument(f"{name} must be positive definite")
            object.__setattr__(self, name, 0.5 * (M + M.T))
        for name in ("mu", "gamma", "q"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidArgument(f"{name} must be a positive real, got {v}")
        if self.p is not None:
            object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(-1))

    @property
    def a(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.Q)))

    @property
    def K1(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.P)))

    @property
    def K2(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.P)))


@dataclass(frozen=True)
class ConditionRecord:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    note: str = ""


@dataclass
class ConditionReport:
    """Ordered collection of condition records."""

    records: list = field(default_factory=list)

    def add(self, name, lhs, rhs, strict=True, note=""):
        margin = float(rhs) - float(lhs)
        passed = margin > STRICT_TOL if strict else margin >= 0.0
        if not math.isfinite(margin):
            passed = False
        self.records.append(ConditionRecord(name, float(lhs), float(rhs), margin, passed, note))
        return self

    def extend(self, other: "ConditionReport"):
        self.records.extend(other.records)
        return self

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, name) -> ConditionRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def names(self):
        return [r.name for r in self.records]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.records)

    def margins(self) -> dict:
        return {r.name: r.margin for r in self.records}

    def format_table(self) -> str:
        lines = [f"{'condition':<22}{'lhs':>14}{'rhs':>14}{'margin':>14}  pass  note"]
        for r in self.records:
            lines.append(f"{r.name:<22}{r.lhs:>14.6g}{r.rhs:>14.6g}{r.margin:>14.6g}  "
                         f"{'yes' if r.passed else 'NO ':<4}  {r.note}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# feedback laws
# --------------------------------------------------------------------------

def control_update(gains: FeedbackGains, plant, cfg: PredictorConfig, z_at_hold, u_hist,
                   t_now: float | None = None) -> float:
    """``k' Phi(z, u)``; ``u_hist`` must cover ``[t - r - tau, t)``."""
    return float(gains.k @ phi(plant, cfg, z_at_hold, u_hist, t_now))


def lti_control_update(gains: FeedbackGains, plant: LtiPlant, z_at_hold, u_hist,
                       t_now: float | None = None) -> float:
    return float(gains.k @ lti_predict(plant, z_at_hold, u_hist, t_now))


# --------------------------------------------------------------------------
# certificate synthesis and checks
# --------------------------------------------------------------------------

def _grid_points(n: int, count: int, radius: float, seed: int):
    """Seeded points in the ``radius``-ball with log-uniform norms in ``[1e-3, radius]``."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.exp(rng.uniform(math.log(1e-3), math.log(radius), size=count))
    return dirs * radii[:, None]


def _lyap_terms(plant, gains, P, xs):
    """Row-wise ``x'P(A+bk')x + x'P f(x)``."""
    M = gains.closed_loop
    quad = np.einsum("ij,jk,ik->i", xs, P @ M, xs)
    if isinstance(plant, StrictFeedbackPlant):
        quad = quad + np.einsum("ij,jk,ik->i", xs, P, plant.f_vec(xs))
    return quad


def _tier1_bound(plant, gains, P):
    """``lambda_max(P M + M'P + 2 L sqrt(n) |P| I)`` (``L = 0`` for LTI plants)."""
    n = P.shape[0]
    M = gains.closed_loop
    L = plant.L if isinstance(plant, StrictFeedbackPlant) else 0.0
    S = P @ M + M.T @ P + 2.0 * L * math.sqrt(n) * np.linalg.norm(P, 2) * np.eye(n)
    return float(np.max(np.linalg.eigvalsh(0.5 * (S + S.T))))


# multiples of the mean Jacobian of f tried when building P
_SECTOR_SHIFTS = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5)


def _mean_jacobian(plant, radius: float, seed: int, count: int = 512) -> np.ndarray:
    """Average finite-difference Jacobian of ``f`` over seeded states (zero for LTI)."""
    n = plant.n
    if not isinstance(plant, StrictFeedbackPlant):
        return np.zeros((n, n))
    xs = _grid_points(n, count, radius, seed + 7)
    J = np.zeros((n, n))
    step = 1e-6
    f0 = plant.f_vec(xs)
    for j in range(n):
        xp = xs.copy()
        xp[:, j] += step
        J[:, j] = np.mean((plant.f_vec(xp) - f0) / step, axis=0)
    return J


def _grid_decay(plant, gains, P, xs) -> float:
    """Largest ``mu`` with ``x'PMx + x'Pf(x) <= -2 mu x'Px`` at every grid point."""
    quad = _lyap_terms(plant, gains, P, xs)
    xPx = np.einsum("ij,jk,ik->i", xs, P, xs)
    return float(np.min(-quad / (2.0 * xPx)))


def _refine_on_grid(plant, gains, P0, xs) -> np.ndarray:
    """Nelder-Mead over the Cholesky factor of ``P`` (unit trace) maximising the grid decay."""
    from scipy.optimize import minimize

    n = P0.shape[0]
    idx = np.tril_indices(n)

    def unpack(v):
        Lc = np.zeros((n, n))
        Lc[idx] = v
        P = Lc @ Lc.T
        return P / np.trace(P)

    def objective(v):
        P = unpack(v)
        if np.min(np.linalg.eigvalsh(P)) <= 1e-12:
            return 1e6
        return -_grid_decay(plant, gains, P, xs)

    v0 = np.linalg.cholesky(P0 / np.trace(P0))[idx]
    res = minimize(objective, v0, method="Nelder-Mead",
                   options={"maxiter": 400 * len(v0), "xatol": 1e-9, "fatol": 1e-12})
    P = unpack(res.x)
    return 0.5 * (P + P.T)


def _dist_gain(plant) -> float:
    if isinstance(plant, StrictFeedbackPlant):
        return float(plant.G)
    return float(np.linalg.norm(plant.G_mat, 2))


def synthesize_certificates(plant, gains: FeedbackGains, obs_p, q: float = 1.0,
                            s: float = 1.0, grid_points: int = 4096, seed: int = 0,
                            radius: float = 10.0, refine: bool = True) -> DesignCertificates:
    """Build ``P``, ``mu``, ``gamma`` for the feedback loop and ``Q`` for the observer.

    ``P`` solves ``P M + M'P = -2 s I`` with ``M = A + bk' + alpha J``, where
    ``J`` is the mean Jacobian of ``f`` on the state grid and ``alpha`` is
    picked from a short list to maximise the certified decay rate (for
    ``alpha = 0`` this is the nominal closed loop).  ``Q`` solves the same
    equation for ``A + p c'`` with level ``q``.  ``mu`` comes from the
    eigenvalue bound when it is feasible and otherwise from a seeded grid
    of states (the result then only certifies the inequality on that grid,
    recorded in ``mu_source``).  In the grid case ``P`` is additionally
    polished by a derivative-free search over its Cholesky factor unless
    ``refine`` is false.
    """
    A, b, c = _linear_part(plant)
    obs_p = np.asarray(obs_p, dtype=float).reshape(-1)
    Q = solve_lyapunov(A + np.outer(obs_p, c), q)
    G = _dist_gain(plant)
    M = gains.closed_loop

    best = None
    xs = _grid_points(plant.n, grid_points, radius, seed)
    for alpha in _SECTOR_SHIFTS:
        try:
            P = solve_lyapunov(M + alpha * _mean_jacobian(plant, radius, seed), s)
        except NotHurwitz:
            continue
        lam = _tier1_bound(plant, gains, P)
        if lam < 0:
            best = (P, None, lam)
            break
        mu0 = _grid_decay(plant, gains, P, xs)
        if best is None or mu0 > best[1]:
            best = (P, mu0, lam)
        if not isinstance(plant, StrictFeedbackPlant):
            break
    if best is None:
        raise NotHurwitz("no Lyapunov candidate could be built")
    if best[1] is not None and refine:
        P = _refine_on_grid(plant, gains, best[0], xs[: min(len(xs), 1024)])
        mu0 = _grid_decay(plant, gains, P, xs)
        if mu0 > best[1]:
            best = (P, mu0, _tier1_bound(plant, gains, P))
    P, mu0, lam = best
    K1 = float(np.min(np.linalg.eigvalsh(P)))
    K2 = float(np.max(np.linalg.eigvalsh(P)))
    normP = float(np.linalg.norm(P, 2))
    if mu0 is None:
        if G > 0:
            mu = -lam / (4.0 * K2 + K1)
            eps = mu * K1
            gamma = G * G * normP * normP / eps
        else:
            mu = -lam / (4.0 * K2)
            eps = 0.0
            gamma = 1e-12
        source = "eigenvalue-bound"
    else:
        if not mu0 > 0:
            raise NotHurwitz(f"no positive decay rate on the state grid (mu0={mu0:.4g})")
        if G > 0:
            mu = 0.8 * mu0
            # left-over 2 (mu0 - mu) x'Px absorbs the cross term
            eps = 2.0 * (mu0 - mu) * K1
            gamma = G * G * normP * normP / eps
        else:
            mu = 0.9 * mu0
            eps = 0.0
            gamma = 1e-12
        source = "state-grid"
    return DesignCertificates(P=P, mu=mu, gamma=gamma, Q=Q, q=q, p=obs_p, eps=eps,
                              mu_source=source)


def check_nonlinear_lyapunov(plant, gains: FeedbackGains, cert: DesignCertificates,
                             grid_points: int = 4096, seed: int = 0, radius: float = 10.0,
                             d_dir=None) -> ConditionReport:
    """Two-tier check of the quadratic dissipation inequality.

    Tier (i), sufficient: ``lambda_max(P M + M'P + 2 L sqrt(n)|P| I + eps I)
    <= -4 mu K2`` together with ``gamma >= G^2 |P|^2 / eps``.  Tier (ii),
    empirical: the inequality itself on seeded ``(x, d)`` with
    ``|x|, |d| <= radius``; the reported margin is the worst value of
    ``(-2 mu x'Px + gamma |d|^2 - lhs) / (|x|^2 + |d|^2)``.
    """
    n = gains.n
    P = cert.P
    report = ConditionReport()
    G = _dist_gain(plant)
    lam = _tier1_bound(plant, gains, P)
    eps = cert.eps if cert.eps > 0 else cert.mu * cert.K1
    normP = float(np.linalg.norm(P, 2))
    if G > 0:
        lhs1 = lam + eps
        need_gamma = G * G * normP * normP / eps
        note = f"eps={eps:.4g}"
        if cert.gamma < need_gamma * (1 - 1e-12):
            lhs1 = math.inf
            note += f"; gamma < {need_gamma:.4g}"
    else:
        lhs1 = lam
        note = "no disturbance channel"
    report.add("lyapunov.tier1", lhs1, -4.0 * cert.mu * cert.K2, strict=False, note=note)

    xs = _grid_points(n, grid_points, radius, seed)
    rng = np.random.default_rng(seed + 1)
    ds = rng.uniform(-radius, radius, size=(grid_points, n)) / math.sqrt(n)
    if d_dir is not None:
        ds = ds[:, :1] * np.asarray(d_dir, dtype=float)[None, :]
    if isinstance(plant, StrictFeedbackPlant):
        gd = np.stack([plant.g_vec(x, 0.0) for x in xs]) * ds
    else:
        gd = ds @ plant.G_mat.T
    lhs = _lyap_terms(plant, gains, P, xs) + np.einsum("ij,jk,ik->i", xs, P, gd)
    rhs = (-2.0 * cert.mu * np.einsum("ij,jk,ik->i", xs, P, xs)
           + cert.gamma * np.sum(ds ** 2, axis=1))
    scale = np.sum(xs ** 2, axis=1) + np.sum(ds ** 2, axis=1)
    worst = int(np.argmin((rhs - lhs) / scale))
    report.add("lyapunov.tier2", lhs[worst] / scale[worst], rhs[worst] / scale[worst],
               strict=False, note=f"{grid_points} seeded points, radius {radius:g}")
    return report


def _plant_Ln(plant):
    if isinstance(plant, StrictFeedbackPlant):
        return plant.L, plant.n
    return 0.0, plant.n


def check_design_conditions(plant, gains: FeedbackGains, cert: DesignCertificates, theta: float,
                            T1: float, T2: float, cfg: PredictorConfig, K_hat: float,
                            p=None) -> ConditionReport:
    """Evaluate the sampling-period, high-gain and predictor-accuracy conditions.

    ``K_hat`` is the predictor-error constant used in the last condition
    (callers normally pass twice the empirical estimate).  ``p`` defaults to
    the observer gains stored in ``cert``.
    """
    p = cert.p if p is None else np.asarray(p, dtype=float).reshape(-1)
    if p is None:
        raise InvalidArgument("observer gains p are required (not stored in the certificate)")
    for name, v in (("theta", theta), ("T1", T1), ("T2", T2)):
        if not (v > 0 and math.isfinite(v)):
            raise InvalidArgument(f"{name} must be positive, got {v}")
    if K_hat < 0:
        raise InvalidArgument("K_hat must be non-negative")
    L, n = _plant_Ln(plant)
    _, b, _ = _linear_part(plant)
    rho = cfg.rho(plant)
    if not rho < 1:
        raise ContractionViolated(f"contraction factor {rho:.6g} >= 1")
    Q, q, a = cert.Q, cert.q, cert.a
    normQ = float(np.linalg.norm(Q, 2))
    Qp = float(np.linalg.norm(Q @ p))
    k = gains.k
    normk = float(np.linalg.norm(k))
    hg = max(1.0, 2.0 * normQ * L * math.sqrt(n) / q)
    obs_coef = 4.0 * Qp * T1 * math.sqrt(normQ / a)
    fb_coef = ((n * L + 1.0 + normk) * math.sqrt(float(b @ cert.P @ b) / (2.0 * cert.K1))
               + cert.mu) * normk
    pred_err = K_hat * rho ** (cfg.l + 1) / (1.0 - rho)

    report = ConditionReport()
    report.add("sampling.T1", obs_coef * (L + hg), q)
    report.add("holding.T2", fb_coef * T2, cert.mu)
    report.add("sampling.theta", obs_coef * (L + theta), q)
    report.add("highgain.theta", hg, theta, strict=False)
    report.add("predictor.accuracy", fb_coef * (T2 + pred_err), cert.mu, note="empirical-K")
    return report

