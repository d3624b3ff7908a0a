# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for separable plants.

Mirrors :class:`predictorlab._pykernels.PyModel` for plants whose ``f_i`` are
sums of catalogued scalar nonlinearities and whose disturbance gains are
constant.  The arithmetic follows the Python reference step by step.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, tanh, sin, ceil
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double _phi(int kind, double v) noexcept nogil:
    if kind == 0:
        return v
    elif kind == 1:
        return v * fabs(v) / sqrt(1.0 + v * v)
    elif kind == 2:
        return tanh(v)
    else:
        return sin(v)


cdef class CModel:
    """Closed-loop right-hand sides evaluated without Python callbacks."""

    cdef readonly int n
    cdef int nterms
    cdef double[:, ::1] A
    cdef double[::1] B
    cdef double[::1] c
    cdef double[::1] dist
    cdef double[::1] obs_gain
    cdef int[::1] trow
    cdef int[::1] tcol
    cdef int[::1] tkind
    cdef double[::1] tcoef
    cdef double* buf
    cdef readonly bint compiled

    def __cinit__(self):
        self.buf = NULL

    def __init__(self, A, B, c, dist, obs_gain, trow, tcol, tkind, tcoef):
        self.A = np.ascontiguousarray(A, dtype=np.float64)
        self.n = self.A.shape[0]
        self.B = np.ascontiguousarray(B, dtype=np.float64)
        self.c = np.ascontiguousarray(c, dtype=np.float64)
        self.dist = np.ascontiguousarray(dist, dtype=np.float64)
        self.obs_gain = np.ascontiguousarray(obs_gain, dtype=np.float64)
        self.trow = np.ascontiguousarray(trow, dtype=np.int32)
        self.tcol = np.ascontiguousarray(tcol, dtype=np.int32)
        self.tkind = np.ascontiguousarray(tkind, dtype=np.int32)
        self.tcoef = np.ascontiguousarray(tcoef, dtype=np.float64)
        self.nterms = self.trow.shape[0]
        self.compiled = True
        # 16 work vectors of length n
        self.buf = <double*> malloc(16 * self.n * sizeof(double))
        if self.buf == NULL:
            raise MemoryError()

    def __dealloc__(self):
        if self.buf != NULL:
            free(self.buf)

    cdef inline void _drift(self, const double* x, double* out) noexcept nogil:
        cdef int i, j, t
        cdef int n = self.n
        cdef double acc
        for i in range(n):
            out[i] = 0.0
        for t in range(self.nterms):
            out[self.trow[t]] += self.tcoef[t] * _phi(self.tkind[t], x[self.tcol[t]])
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += self.A[i, j] * x[j]
            out[i] += acc

    cdef inline void _plant(self, const double* x, double u, double d, double* out) noexcept nogil:
        cdef int i
        self._drift(x, out)
        for i in range(self.n):
            out[i] = out[i] + self.dist[i] * d
            out[i] = out[i] + self.B[i] * u

    cdef inline double _observer(self, const double* z, double w, double u, double* out) noexcept nogil:
        cdef int i
        cdef double innov = 0.0, dw = 0.0
        self._drift(z, out)
        for i in range(self.n):
            out[i] = out[i] + self.B[i] * u
            innov += self.c[i] * z[i]
        innov = innov - w
        for i in range(self.n):
            dw += self.c[i] * out[i]
            out[i] = out[i] + self.obs_gain[i] * innov
        return dw

    def integrate(self, x0, z0, double w, double h, int nsteps, double u_plant, double u_obs, dvals):
        cdef int n = self.n
        cdef double[::1] dv = np.ascontiguousarray(dvals, dtype=np.float64)
        cdef cnp.ndarray[cnp.float64_t, ndim=2] xs_a = np.empty((nsteps, n))
        cdef cnp.ndarray[cnp.float64_t, ndim=2] ds_a = np.empty((nsteps, n))
        cdef cnp.ndarray[cnp.float64_t, ndim=2] de_a = np.empty((nsteps, n))
        cdef cnp.ndarray[cnp.float64_t, ndim=2] zs_a = np.empty((nsteps, n))
        cdef cnp.ndarray[cnp.float64_t, ndim=1] ws_a = np.empty(nsteps)
        cdef double[:, ::1] xs = xs_a
        cdef double[:, ::1] ds = ds_a
        cdef double[:, ::1] de = de_a
        cdef double[:, ::1] zs = zs_a
        cdef double[::1] ws = ws_a
        cdef double[::1] xin = np.ascontiguousarray(x0, dtype=np.float64)
        cdef double[::1] zin = np.ascontiguousarray(z0, dtype=np.float64)
        cdef double* x = self.buf
        cdef double* z = self.buf + n
        cdef double* k1 = self.buf + 2 * n
        cdef double* k2 = self.buf + 3 * n
        cdef double* k3 = self.buf + 4 * n
        cdef double* k4 = self.buf + 5 * n
        cdef double* a1 = self.buf + 6 * n
        cdef double* a2 = self.buf + 7 * n
        cdef double* a3 = self.buf + 8 * n
        cdef double* a4 = self.buf + 9 * n
        cdef double* tmp = self.buf + 10 * n
        cdef double b1, b2, b3, b4, h2 = 0.5 * h, h6 = h / 6.0
        cdef double d0, dm, d1
        cdef int i, k
        for i in range(n):
            x[i] = xin[i]
            z[i] = zin[i]
        with nogil:
            self._plant(x, u_plant, dv[0], k1)
            for k in range(nsteps):
                dm = dv[2 * k + 1]
                d1 = dv[2 * k + 2]
                for i in range(n):
                    ds[k, i] = k1[i]
                for i in range(n):
                    tmp[i] = x[i] + h2 * k1[i]
                self._plant(tmp, u_plant, dm, k2)
                for i in range(n):
                    tmp[i] = x[i] + h2 * k2[i]
                self._plant(tmp, u_plant, dm, k3)
                for i in range(n):
                    tmp[i] = x[i] + h * k3[i]
                self._plant(tmp, u_plant, d1, k4)
                for i in range(n):
                    x[i] = x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

                b1 = self._observer(z, w, u_obs, a1)
                for i in range(n):
                    tmp[i] = z[i] + h2 * a1[i]
                b2 = self._observer(tmp, w + h2 * b1, u_obs, a2)
                for i in range(n):
                    tmp[i] = z[i] + h2 * a2[i]
                b3 = self._observer(tmp, w + h2 * b2, u_obs, a3)
                for i in range(n):
                    tmp[i] = z[i] + h * a3[i]
                b4 = self._observer(tmp, w + h * b3, u_obs, a4)
                for i in range(n):
                    z[i] = z[i] + h6 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])
                w = w + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)

                self._plant(x, u_plant, d1, k1)
                for i in range(n):
                    xs[k, i] = x[i]
                    de[k, i] = k1[i]
                    zs[k, i] = z[i]
                ws[k] = w
        return xs_a, ds_a, de_a, zs_a, ws_a

    def flow(self, x0, durations, values, double h_max):
        cdef int n = self.n
        cdef double[::1] xin = np.ascontiguousarray(x0, dtype=np.float64)
        cdef double[::1] dur = np.ascontiguousarray(durations, dtype=np.float64)
        cdef double[::1] val = np.ascontiguousarray(values, dtype=np.float64)
        cdef double* x = self.buf
        cdef double* k1 = self.buf + 2 * n
        cdef double* k2 = self.buf + 3 * n
        cdef double* k3 = self.buf + 4 * n
        cdef double* k4 = self.buf + 5 * n
        cdef double* tmp = self.buf + 10 * n
        cdef double h, h2, h6, u
        cdef int i, j, s, nsteps
        cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
        for i in range(n):
            x[i] = xin[i]
        with nogil:
            for j in range(dur.shape[0]):
                if dur[j] <= 0:
                    continue
                nsteps = <int> ceil(dur[j] / h_max - 1e-9)
                if nsteps < 1:
                    nsteps = 1
                h = dur[j] / nsteps
                h2 = 0.5 * h
                h6 = h / 6.0
                u = val[j]
                for s in range(nsteps):
                    self._plant(x, u, 0.0, k1)
                    for i in range(n):
                        tmp[i] = x[i] + h2 * k1[i]
                    self._plant(tmp, u, 0.0, k2)
                    for i in range(n):
                        tmp[i] = x[i] + h2 * k2[i]
                    self._plant(tmp, u, 0.0, k3)
                    for i in range(n):
                        tmp[i] = x[i] + h * k3[i]
                    self._plant(tmp, u, 0.0, k4)
                    for i in range(n):
                        x[i] = x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(n):
            out[i] = x[i]
        return out

    def picard_step(self, grid, U, double T):
        cdef double[:, ::1] g = np.ascontiguousarray(grid, dtype=np.float64)
        cdef double[::1] Uv = np.ascontiguousarray(U, dtype=np.float64)
        cdef int N = g.shape[0] - 1
        cdef int n = self.n
        cdef cnp.ndarray[cnp.float64_t, ndim=2] out_a = np.empty((N + 1, n))
        cdef double[:, ::1] out = out_a
        cdef cnp.ndarray[cnp.float64_t, ndim=1] s_a = np.linspace(0.0, T, N + 1)
        cdef double[::1] s = s_a
        cdef double* F0 = self.buf
        cdef double* Fp = self.buf + n
        cdef double* Fk = self.buf + 2 * n
        cdef double* acc = self.buf + 3 * n
        cdef double hq = T / N
        cdef int i, k
        with nogil:
            self._drift(&g[0, 0], F0)
            for i in range(n):
                acc[i] = 0.0
                Fp[i] = 0.0
                out[0, i] = g[0, i] + s[0] * F0[i] + hq * acc[i] + Uv[0] * self.B[i]
            for k in range(1, N + 1):
                self._drift(&g[k, 0], Fk)
                for i in range(n):
                    Fk[i] = Fk[i] - F0[i]
                    acc[i] = acc[i] + 0.5 * (Fk[i] + Fp[i])
                    Fp[i] = Fk[i]
                    out[k, i] = g[0, i] + s[k] * F0[i] + hq * acc[i] + Uv[k] * self.B[i]
        return out_a
