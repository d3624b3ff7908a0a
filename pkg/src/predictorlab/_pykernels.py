"""Pure-Python/numpy implementations of the hot kernels.

This module is the reference and the fallback for :mod:`predictorlab._ckernels`.
It accepts any plant (arbitrary ``f_i``/``g_i`` callables), whereas the
compiled module only handles separable plants with constant ``g``.
"""

import numpy as np

from .plant import LtiPlant


class PyModel:
    """Plant + observer right-hand sides for one closed-loop configuration.

    Parameters
    ----------
    plant : StrictFeedbackPlant or LtiPlant
    obs_gain : array, optional
        Output-injection vector of the observer: ``theta^i p_i`` for
        strict-feedback plants, ``p`` for LTI plants.
    d_dir : array, optional
        Direction of the scalar disturbance; the plant sees ``d(t) * d_dir``.
    """

    compiled = False

    def __init__(self, plant, obs_gain=None, d_dir=None):
        self.plant = plant
        n = plant.n
        self.n = n
        self.lti = isinstance(plant, LtiPlant)
        if self.lti:
            self.A = plant.A
            self.B = plant.B
            self.c = plant.c
            self._dist = plant.G_mat @ (np.zeros(plant.G_mat.shape[1]) if d_dir is None
                                        else np.asarray(d_dir, dtype=float))
        else:
            self.A, self.B, self.c = plant.linear_part()
        self.obs_gain = np.zeros(n) if obs_gain is None else np.asarray(obs_gain, dtype=float)
        self.d_dir = np.zeros(n) if d_dir is None else np.asarray(d_dir, dtype=float)

    # drift of the delay-free system: f(x) + A x (no input)
    def drift(self, x):
        x = np.asarray(x, dtype=float)
        if self.lti:
            return x @ self.A.T
        out = self.plant.f_vec(x)
        out[..., :-1] += x[..., 1:]
        return out

    def plant_rhs(self, x, u, d):
        dx = self.drift(x)
        if self.lti:
            dx = dx + self._dist * d
        else:
            dx = dx + self.plant.g_vec(x, u) * (self.d_dir * d)
        dx = dx + self.B * u
        return dx

    def observer_rhs(self, z, w, u):
        base = self.drift(z) + self.B * u
        innov = self.c @ z - w
        return base + self.obs_gain * innov, self.c @ base

    def integrate(self, x, z, w, h, nsteps, u_plant, u_obs, dvals):
        """``nsteps`` RK4 steps of size ``h`` for plant and observer.

        ``dvals`` holds the scalar disturbance at ``t0 + k h / 2`` for
        ``k = 0 .. 2 nsteps``.  Returns ``(xs, d_start, d_end, zs, ws)`` where
        row ``k`` refers to the end of step ``k`` (``d_start[k]`` to its
        beginning).
        """
        n = self.n
        x = np.array(x, dtype=float)
        z = np.array(z, dtype=float)
        w = float(w)
        xs = np.empty((nsteps, n))
        d_start = np.empty((nsteps, n))
        d_end = np.empty((nsteps, n))
        zs = np.empty((nsteps, n))
        ws = np.empty(nsteps)
        h2 = 0.5 * h
        k1 = self.plant_rhs(x, u_plant, dvals[0])
        for k in range(nsteps):
            d0, dm, d1 = dvals[2 * k], dvals[2 * k + 1], dvals[2 * k + 2]
            d_start[k] = k1
            k2 = self.plant_rhs(x + h2 * k1, u_plant, dm)
            k3 = self.plant_rhs(x + h2 * k2, u_plant, dm)
            k4 = self.plant_rhs(x + h * k3, u_plant, d1)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

            a1, b1 = self.observer_rhs(z, w, u_obs)
            a2, b2 = self.observer_rhs(z + h2 * a1, w + h2 * b1, u_obs)
            a3, b3 = self.observer_rhs(z + h2 * a2, w + h2 * b2, u_obs)
            a4, b4 = self.observer_rhs(z + h * a3, w + h * b3, u_obs)
            z = z + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            w = w + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)

            k1 = self.plant_rhs(x, u_plant, d1)
            xs[k] = x
            d_end[k] = k1
            zs[k] = z
            ws[k] = w
        return xs, d_start, d_end, zs, ws

    def flow(self, x0, durations, values, h_max):
        """RK4 solution of ``x' = f(x) + A x + B u`` through ZOH segments.

        Each segment of length ``durations[j]`` with input ``values[j]`` is
        split into the fewest equal steps not exceeding ``h_max``.
        """
        x = np.array(x0, dtype=float)
        B = self.B
        for dur, u in zip(durations, values):
            if dur <= 0:
                continue
            nsteps = max(1, int(np.ceil(dur / h_max - 1e-9)))
            h = dur / nsteps
            h2 = 0.5 * h
            bu = B * u
            for _ in range(nsteps):
                k1 = self.drift(x) + bu
                k2 = self.drift(x + h2 * k1) + bu
                k3 = self.drift(x + h2 * k2) + bu
                k4 = self.drift(x + h * k3) + bu
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return x

    def picard_step(self, grid, U, T):
        """One successive-approximation step on a uniform grid over ``[0, T]``.

        ``grid`` has shape ``(N+1, n)``; ``U[k]`` is the exact input integral
        from 0 to node ``k``.  The drift is integrated with the composite
        trapezoid rule written as ``s_k F_0 + h * cumsum(mean(F - F_0))`` so a
        constant iterate is integrated with a single rounding.
        """
        grid = np.asarray(grid, dtype=float)
        N = grid.shape[0] - 1
        F = self.drift(grid)
        F0 = F[0]
        dev = F - F0
        s = np.linspace(0.0, T, N + 1)
        hq = T / N
        acc = np.zeros_like(grid)
        acc[1:] = np.cumsum(0.5 * (dev[1:] + dev[:-1]), axis=0)
        return grid[0] + s[:, None] * F0 + hq * acc + np.outer(U, self.B)


def make_model(plant, obs_gain=None, d_dir=None):
    return PyModel(plant, obs_gain, d_dir)
