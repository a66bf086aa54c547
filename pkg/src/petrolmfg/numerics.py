"""Scalar numerics: standard normal functions, a safeguarded root finder and a
quadrature rule used to cross-check closed-form expectations."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Optional, Sequence

from scipy import integrate

from .errors import AccuracyError, BracketError, InvalidArgumentError

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# mass of N(0,1) outside [-12, 12] is ~3.6e-33
QUAD_HALF_WIDTH = 12.0

DEFAULT_ROOT_TOL = 1e-12

_STD_NORMAL = NormalDist()


def _check_finite(z: float, name: str = "z") -> float:
    z = float(z)
    if not math.isfinite(z):
        raise InvalidArgumentError(f"{name} must be finite, got {z!r}")
    return z


def std_normal_cdf(z: float) -> float:
    """Standard normal distribution function N(z).

    Evaluated as ``erfc(-z/sqrt(2))/2`` so the lower tail keeps full relative
    precision instead of cancelling against 1.
    """
    z = _check_finite(z)
    return min(1.0, max(0.0, 0.5 * math.erfc(-z / SQRT2)))


def std_normal_pdf(z: float) -> float:
    """Standard normal density N'(z)."""
    z = _check_finite(z)
    return INV_SQRT_2PI * math.exp(-0.5 * z * z)


def std_normal_ppf(q: float) -> float:
    """Inverse of :func:`std_normal_cdf` for ``0 < q < 1``."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise InvalidArgumentError(f"quantile level must lie in (0, 1), got {q!r}")
    return _STD_NORMAL.inv_cdf(q)


@dataclass(frozen=True)
class Bracket:
    """Closed interval [lo, hi] expected to contain the root of an increasing function."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise InvalidArgumentError("bracket ends must be finite")
        if not self.lo < self.hi:
            raise InvalidArgumentError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


def find_root_increasing(
    f: Callable[[float], float],
    bracket: Bracket,
    tol: float = DEFAULT_ROOT_TOL,
    fprime: Optional[Callable[[float], float]] = None,
    max_iter: int = 4400,
) -> float:
    """Zero of a strictly increasing function inside ``bracket``.

    Bisection safeguards every step. With ``fprime`` the candidate step is
    Newton's; without it an Illinois-modified false-position step is used.
    A candidate is rejected (and the interval bisected) when it leaves the
    current bracket or when the previous candidate step failed to halve
    ``|f|``; so the bracket at least halves every second iteration.

    Stops as soon as ``|f(p)| <= tol`` or the bracket is narrower than ``tol``.
    A step smaller than a few ulps of ``p`` also ends the search: at that point
    the residual sits on the rounding floor of ``f`` and cannot shrink further.

    Raises
    ------
    InvalidArgumentError
        If ``tol`` is not positive.
    BracketError
        If ``f`` has the same sign at both ends (beyond ``tol``).
    """
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol!r}")
    lo, hi = float(bracket.lo), float(bracket.hi)
    f_lo, f_hi = f(lo), f(hi)
    if abs(f_lo) <= tol:
        return lo
    if abs(f_hi) <= tol:
        return hi
    if f_lo > 0 or f_hi < 0:
        raise BracketError(
            f"no sign change on [{lo}, {hi}]: f(lo)={f_lo:.6g}, f(hi)={f_hi:.6g}"
        )

    p = 0.5 * (lo + hi)
    f_old = math.inf
    side = 0  # Illinois bookkeeping: which end was retained last time
    for _ in range(max_iter):
        fp = f(p)
        if abs(fp) <= tol:
            return p
        if fp < 0:
            lo, f_lo = p, fp
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            hi, f_hi = p, fp
            if side == 1:
                f_lo *= 0.5
            side = 1
        if hi - lo <= tol:
            return 0.5 * (lo + hi)

        if fprime is not None:
            d = fprime(p)
            cand = p - fp / d if d > 0 else math.nan
        else:
            cand = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)

        if lo <= cand <= hi and abs(fp) <= 0.5 * f_old:
            f_old = abs(fp)
            step = cand - p
            p = cand
        else:
            f_old = math.inf
            step = 0.5 * (hi - lo)
            p = lo + step
        if abs(step) <= 4.0 * math.ulp(p):
            return p
    return p


def quadrature_expectation(
    g: Callable[[float], float],
    tol: float = 1e-10,
    breakpoints: Sequence[float] = (),
) -> float:
    """E[g(X)] for X ~ N(0, 1), by adaptive Gauss-Kronrod on [-12, 12].

    ``breakpoints`` marks kinks of ``g`` (e.g. where a positive part switches
    on) so the adaptive rule does not have to discover them.

    Raises :class:`AccuracyError` (carrying the estimate) if the reported
    error exceeds ``tol``.
    """
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol!r}")
    a, b = -QUAD_HALF_WIDTH, QUAD_HALF_WIDTH
    points = sorted({float(x) for x in breakpoints if a < x < b}) or None

    def integrand(x):
        return g(x) * INV_SQRT_2PI * math.exp(-0.5 * x * x)

    with warnings.catch_warnings():
        # a poor error estimate is reported below as AccuracyError
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(
            integrand, a, b, points=points, epsabs=0.1 * tol, epsrel=0.0, limit=500
        )
    if not err <= tol:
        raise AccuracyError(
            f"quadrature error estimate {err:.3g} exceeds tol {tol:.3g}",
            estimate=value,
            error=err,
        )
    return value
