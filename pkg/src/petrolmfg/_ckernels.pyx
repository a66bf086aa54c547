# cython: language_level=3
"""Compiled best-reply kernels; mirrors ``_fallback`` exactly in algorithm."""

import numpy as np

from libc.math cimport erfc, exp, fabs, fmax, INFINITY
from libc.float cimport DBL_EPSILON, DBL_MIN

cdef double SQRT1_2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327
# the bracket at least halves every second step; this covers the full double range
cdef int MAX_ITER = 4400


cdef inline double _solve(double a, double b, double g, double d, double s,
                          double pbar, double pprev, double tol) noexcept nogil:
    cdef double gd = g + d
    cdef double lo = (g * pprev - b) / gd
    cdef double hi = (g * pprev + a) / gd
    cdef double p, z, nz, nu, f, df, cand, step, f_old
    cdef double pad = 1e-12 * (1.0 + fmax(fabs(lo), fabs(hi)))
    cdef int it
    lo -= pad
    hi += pad
    p = pprev
    if not (lo < p < hi):
        p = 0.5 * (lo + hi)
    f_old = INFINITY
    for it in range(MAX_ITER):
        z = (p - pbar) / s
        # one erfc per step: the tail side is exact, its complement is only
        # needed to absolute precision
        if z < 0:
            nz = 0.5 * erfc(-z * SQRT1_2)
            nu = 1.0 - nz
        else:
            nu = 0.5 * erfc(z * SQRT1_2)
            nz = 1.0 - nu
        f = -a * nu + b * nz + g * (p - pprev) + d * p
        if fabs(f) <= tol:
            return p
        if f < 0:
            lo = p
        else:
            hi = p
        if hi - lo <= tol:
            return 0.5 * (lo + hi)
        df = (a + b) / s * INV_SQRT_2PI * exp(-0.5 * z * z) + gd
        cand = p - f / df
        if lo <= cand <= hi and fabs(f) <= 0.5 * f_old:
            f_old = fabs(f)
            step = cand - p
            p = cand
        else:
            f_old = INFINITY
            step = 0.5 * (hi - lo)
            p = lo + step
        if fabs(step) <= 4.0 * DBL_EPSILON * fabs(p) + DBL_MIN:
            return p
    return p


def best_replies(const double[::1] alpha, const double[::1] beta,
                 const double[::1] gamma, const double[::1] delta,
                 const double[::1] sigma, double p_bar,
                 const double[::1] p_prev, double tol):
    """Best reply of every agent against the common mean ``p_bar``."""
    cdef Py_ssize_t m = p_prev.shape[0]
    cdef Py_ssize_t i
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            o[i] = _solve(alpha[i], beta[i], gamma[i], delta[i], sigma[i],
                          p_bar, p_prev[i], tol)
    return out


def simulate_prices(const double[::1] alpha, const double[::1] beta,
                    const double[::1] gamma, const double[::1] delta,
                    const double[::1] sigma, const double[::1] x0,
                    Py_ssize_t days, double tol):
    """Iterate the synchronous best-reply map; row n holds day n's prices."""
    cdef Py_ssize_t m = x0.shape[0]
    cdef Py_ssize_t n, i
    cdef double mean
    out = np.empty((days + 1, m), dtype=np.float64)
    cdef double[:, ::1] x = out
    x[0, :] = x0
    with nogil:
        for n in range(days):
            mean = 0.0
            for i in range(m):
                mean += x[n, i]
            mean /= m
            for i in range(m):
                x[n + 1, i] = _solve(alpha[i], beta[i], gamma[i], delta[i], sigma[i],
                                     mean, x[n, i], tol)
    return out
