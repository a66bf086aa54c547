"""Pure numpy best-reply kernels, used when the compiled extension is unavailable.

Same safeguarded Newton-bisection as ``_ckernels``, vectorised across agents:
each agent keeps its own bracket and leaves the active set once converged.
"""

import numpy as np
from scipy.special import ndtr

INV_SQRT_2PI = 0.3989422804014327
# the bracket at least halves every second step; this covers the full double range
MAX_ITER = 4400
_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny


def best_replies(alpha, beta, gamma, delta, sigma, p_bar, p_prev, tol):
    a, b, g, d, s, pprev = (np.asarray(v, dtype=float) for v in
                            (alpha, beta, gamma, delta, sigma, p_prev))
    pbar = np.broadcast_to(np.asarray(p_bar, dtype=float), pprev.shape)
    gd = g + d
    lo = (g * pprev - b) / gd
    hi = (g * pprev + a) / gd
    pad = 1e-12 * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))
    lo, hi = lo - pad, hi + pad
    p = np.where((lo < pprev) & (pprev < hi), pprev, 0.5 * (lo + hi))
    f_old = np.full(p.shape, np.inf)
    out = p.copy()
    idx = np.arange(p.shape[0])

    for _ in range(MAX_ITER):
        if idx.size == 0:
            break
        z = (p - pbar) / s
        nz = ndtr(z)
        f = -a * (1.0 - nz) + b * nz + g * (p - pprev) + d * p

        hit = np.abs(f) <= tol
        neg = f < 0
        lo = np.where(neg, p, lo)
        hi = np.where(neg, hi, p)
        narrow = ~hit & (hi - lo <= tol)
        out[idx[hit]] = p[hit]
        out[idx[narrow]] = 0.5 * (lo[narrow] + hi[narrow])

        df = (a + b) / s * INV_SQRT_2PI * np.exp(-0.5 * z * z) + gd
        cand = p - f / df
        af = np.abs(f)
        ok = (lo <= cand) & (cand <= hi) & (af <= 0.5 * f_old)
        bis = 0.5 * (hi - lo)
        f_old = np.where(ok, af, np.inf)
        step = np.where(ok, cand - p, bis)
        p = np.where(ok, cand, lo + bis)

        tiny = ~(hit | narrow) & (np.abs(step) <= 4.0 * _EPS * np.abs(p) + _TINY)
        out[idx[tiny]] = p[tiny]

        keep = ~(hit | narrow | tiny)
        if not keep.all():
            idx = idx[keep]
            a, b, g, d, s, pprev, pbar, gd = (v[keep] for v in (a, b, g, d, s, pprev, pbar, gd))
            lo, hi, p, f_old = (v[keep] for v in (lo, hi, p, f_old))
    else:
        out[idx] = p
    return out


def simulate_prices(alpha, beta, gamma, delta, sigma, x0, days, tol):
    x0 = np.asarray(x0, dtype=float)
    out = np.empty((days + 1, x0.shape[0]))
    out[0] = x0
    for n in range(days):
        out[n + 1] = best_replies(alpha, beta, gamma, delta, sigma,
                                  out[n].mean(), out[n], tol)
    return out
