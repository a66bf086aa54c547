"""Best replies, the daily transition map G and its mean-field equilibrium.

G maps today's price vector to tomorrow's: every station simultaneously
minimises its expected cost against today's average and its own price.
With delta > 0 in every cluster G is a contraction in the sup norm, so its
fixed point (the mean-field equilibrium) exists, is unique, and comes with
an a-posteriori error bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import ndtri

from . import kernels
from .errors import BracketError, ConvergenceError, DegenerateModeError, InvalidArgumentError
from .model import ClusterParams, MarketState, Population, phi_prime, phi_second
from .numerics import DEFAULT_ROOT_TOL, INV_SQRT_2PI, Bracket, find_root_increasing, std_normal_ppf

DEFAULT_FIXED_POINT_TOL = 1e-10


def reply_bracket(params: ClusterParams, p_prev: float) -> Bracket:
    """Interval guaranteed to contain the best reply when gamma + delta > 0.

    Since 0 <= N <= 1, phi'(p) is squeezed between
    ``-alpha + (gamma+delta) p - gamma p_prev`` and ``beta + (gamma+delta) p - gamma p_prev``.
    """
    gd = params.gamma + params.delta
    if gd <= 0:
        raise DegenerateModeError("no finite bracket when gamma = delta = 0")
    lo = (params.gamma * p_prev - params.beta) / gd
    hi = (params.gamma * p_prev + params.alpha) / gd
    # rounding slack so the endpoint signs survive evaluation error
    pad = 1e-12 * (1.0 + max(abs(lo), abs(hi)))
    return Bracket(lo - pad, hi + pad)


def best_reply(
    params: ClusterParams,
    sigma: float,
    p_bar: float,
    p_prev: float,
    tol: float = DEFAULT_ROOT_TOL,
) -> float:
    """Tomorrow's price minimising the expected cost of one station.

    In the degenerate regime (gamma = delta = 0) the minimiser is explicit:
    ``p_bar + sigma * N^{-1}(alpha / (alpha + beta))``.
    """
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be > 0, got {sigma!r}")
    if params.gamma + params.delta == 0:
        return p_bar + sigma * std_normal_ppf(params.alpha / (params.alpha + params.beta))
    try:
        return find_root_increasing(
            lambda p: phi_prime(params, sigma, p_bar, p_prev, p),
            reply_bracket(params, p_prev),
            tol,
            fprime=lambda p: phi_second(params, sigma, p_bar, p),
        )
    except BracketError as exc:  # pragma: no cover - analytic bracket cannot fail
        raise RuntimeError(f"best-reply bracket invariant broken: {exc}") from exc


def _check_state(pop: Population, state: MarketState) -> None:
    if state.m != pop.m:
        raise InvalidArgumentError(f"state has {state.m} prices but population has {pop.m} agents")


def _degenerate_shift(pop: Population) -> np.ndarray:
    """Per-agent offset sigma_i * N^{-1}(alpha/(alpha+beta)) of the degenerate best reply."""
    a, b = pop.agent_params[0], pop.agent_params[1]
    return pop.sigmas * ndtri(a / (a + b))


def _replies(pop: Population, prices: np.ndarray, tol: float) -> np.ndarray:
    p_bar = float(np.mean(prices))
    if pop.degenerate:
        return p_bar + _degenerate_shift(pop)
    a, b, g, d = pop.agent_params
    return kernels.best_replies(a, b, g, d, pop.sigmas, p_bar, prices, tol)


def transition_map(pop: Population, state: MarketState, tol: float = DEFAULT_ROOT_TOL) -> MarketState:
    """One day of synchronous best replies: G(state)."""
    _check_state(pop, state)
    return MarketState(_replies(pop, state.prices, tol))


@dataclass(frozen=True)
class Trajectory:
    """Prices for days 0..n; row ``n`` is the state on day ``n``."""

    prices: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.prices, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1:
            raise InvalidArgumentError("trajectory prices must be a (days+1, m) array")
        p.flags.writeable = False
        object.__setattr__(self, "prices", p)

    @property
    def days(self) -> int:
        return self.prices.shape[0] - 1

    @property
    def m(self) -> int:
        return self.prices.shape[1]

    @property
    def means(self) -> np.ndarray:
        return self.prices.mean(axis=1)

    @property
    def states(self) -> list[MarketState]:
        return [MarketState(row) for row in self.prices]

    def __len__(self):
        return self.prices.shape[0]

    def __repr__(self):
        return f"Trajectory(days={self.days}, m={self.m})"


def simulate(
    pop: Population,
    initial: MarketState,
    days: int,
    tol: float = DEFAULT_ROOT_TOL,
) -> Trajectory:
    """Iterate G for ``days`` days starting from ``initial``. Fully deterministic."""
    if int(days) != days or days < 1:
        raise InvalidArgumentError(f"days must be an integer >= 1, got {days!r}")
    _check_state(pop, initial)
    days = int(days)
    if pop.degenerate:
        shift = _degenerate_shift(pop)
        out = np.empty((days + 1, pop.m))
        out[0] = initial.prices
        for n in range(days):
            out[n + 1] = out[n].mean() + shift
        return Trajectory(out)
    a, b, g, d = pop.agent_params
    return Trajectory(kernels.simulate_prices(a, b, g, d, pop.sigmas, initial.prices, days, tol))


def degenerate_drift(pop: Population) -> float:
    """Per-day increment of the mean price when gamma = delta = 0.

    For a single cluster this is ``N^{-1}(alpha/(alpha+beta)) * mean(sigma)``;
    it vanishes only when alpha = beta, so otherwise no equilibrium exists.
    """
    if not pop.degenerate:
        raise InvalidArgumentError("drift is only defined for a degenerate population")
    return float(np.mean(_degenerate_shift(pop)))


def _slopes(pop: Population, p_bar: float, next_prices: np.ndarray) -> np.ndarray:
    """A_i = ((alpha+beta)/sigma_i) N'((p_i^+ - p_bar)/sigma_i)."""
    a, b = pop.agent_params[0], pop.agent_params[1]
    s = pop.sigmas
    z = (next_prices - p_bar) / s
    return (a + b) / s * INV_SQRT_2PI * np.exp(-0.5 * z * z)


def jacobian_row(pop: Population, state: MarketState, next_prices, agent: int) -> np.ndarray:
    """Row ``agent`` of the Jacobian of G at ``state``.

    ``next_prices`` must be G(state). Off-diagonal entries are ``(A/m)/(A+gamma+delta)``
    and the diagonal adds ``gamma/(A+gamma+delta)``; the row sums to
    ``(gamma+A)/(A+gamma+delta)``.
    """
    _check_state(pop, state)
    if not 0 <= agent < pop.m or int(agent) != agent:
        raise InvalidArgumentError(f"agent index {agent!r} out of range for m={pop.m}")
    nxt = np.asarray(next_prices, dtype=float)
    if nxt.shape != (pop.m,):
        raise InvalidArgumentError("next_prices must have one entry per agent")
    c = pop.clusters[pop.agents[agent].cluster]
    A = _slopes(pop, state.mean, nxt)[agent]
    den = A + c.gamma + c.delta
    row = np.full(pop.m, (A / pop.m) / den)
    row[agent] = (c.gamma + A / pop.m) / den
    return row


def jacobian(pop: Population, state: MarketState, next_prices=None, tol: float = DEFAULT_ROOT_TOL) -> np.ndarray:
    """Full m x m Jacobian of G; computes G(state) itself when not supplied."""
    _check_state(pop, state)
    nxt = _replies(pop, state.prices, tol) if next_prices is None else np.asarray(next_prices, float)
    diag, coupling = _jacobian_parts(pop, state.mean, nxt)
    return np.diag(diag) + np.outer(coupling, np.full(pop.m, 1.0 / pop.m))


def _jacobian_parts(pop: Population, p_bar: float, next_prices: np.ndarray):
    """Jacobian of G as diag(gamma/den) + (A/den) 1^T / m."""
    _, _, g, d = pop.agent_params
    A = _slopes(pop, p_bar, next_prices)
    den = A + g + d
    return g / den, A / den


@dataclass(frozen=True)
class ContractionReport:
    """Uniform Lipschitz certificate of G in the sup norm.

    ``per_agent_A_max`` is A_i at the density mode, ``(alpha+beta)/(sigma_i sqrt(2 pi))``;
    the row-sum bound ``(gamma+A)/(A+gamma+delta)`` is increasing in A, so its
    value there bounds every Jacobian row at every state.
    """

    per_agent_A_max: np.ndarray = field(repr=False)
    bound_L: float
    is_contraction: bool

    def to_dict(self) -> dict:
        return {
            "bound_L": self.bound_L,
            "is_contraction": self.is_contraction,
            "per_agent_A_max": self.per_agent_A_max.tolist(),
        }


def contraction_bound(pop: Population) -> ContractionReport:
    a, b, g, d = pop.agent_params
    if np.any(d <= 0):
        raise DegenerateModeError(
            "delta = 0 in some cluster: G has no uniform contraction certificate"
        )
    A = (a + b) / pop.sigmas * INV_SQRT_2PI
    L = float(np.max((g + A) / (A + g + d)))
    A.flags.writeable = False
    return ContractionReport(A, L, L < 1.0)


@dataclass(frozen=True)
class EquilibriumResult:
    """Fixed point of G with its convergence certificate.

    ``prices`` is G(x) for the final iterate x, ``residual`` is ``|G(x) - x|_inf``
    and ``error_bound = L/(1-L) * residual`` bounds the distance of ``prices``
    to the exact equilibrium. ``certified`` records whether that bound met
    the requested tolerance (it can fail only when the residual has hit the
    floating-point floor first).
    """

    prices: np.ndarray = field(repr=False)
    mean: float
    iterations: int
    residual: float
    error_bound: float
    bound: ContractionReport
    tol: float
    certified: bool
    method: str

    def to_dict(self) -> dict:
        return {
            "prices": self.prices.tolist(),
            "mean": self.mean,
            "iterations": self.iterations,
            "residual": self.residual,
            "error_bound": self.error_bound,
            "tol": self.tol,
            "certified": self.certified,
            "method": self.method,
            "bound_L": self.bound.bound_L,
            "is_contraction": self.bound.is_contraction,
            "per_agent_A_max": self.bound.per_agent_A_max.tolist(),
        }


def solve_equilibrium(
    pop: Population,
    initial: MarketState,
    tol: float = DEFAULT_FIXED_POINT_TOL,
    max_iter: int = 10_000,
    root_tol: float = 1e-15,
    method: Literal["newton", "picard"] = "newton",
) -> EquilibriumResult:
    """Mean-field equilibrium by certified fixed-point iteration of G.

    The loop stops once ``L/(1-L) * |G(x) - x|_inf <= tol``, which guarantees
    ``|G(x) - x*|_inf <= tol`` (Banach a-posteriori estimate).

    ``method="picard"`` iterates x <- G(x). ``method="newton"`` (default) first
    tries a Newton step on G(x) - x = 0; the Jacobian of G is diagonal plus
    rank one, so the step costs O(m) via Sherman-Morrison. The Newton point is
    kept only if it lowers the residual, otherwise the plain G step is taken,
    so the certificate is unchanged while convergence no longer slows down as
    L approaches 1.

    If the residual stops decreasing (rounding floor) after already being
    below ``tol``, the best iterate is returned with ``certified=False``.
    """
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol!r}")
    if method not in ("newton", "picard"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    if pop.degenerate:
        raise DegenerateModeError(
            "gamma = delta = 0: the unregularized game cannot admit an equilibrium unless "
            "alpha = beta, and G is not a contraction"
        )
    _check_state(pop, initial)
    report = contraction_bound(pop)
    L = report.bound_L
    factor = L / (1.0 - L)

    def residual_at(x):
        gx = _replies(pop, x, root_tol)
        return gx, float(np.max(np.abs(gx - x)))

    x = initial.prices.copy()
    gx, res = residual_at(x)
    best = (res, x, gx)
    stall = 0
    it = 0
    while factor * best[0] > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"no certified equilibrium after {max_iter} iterations "
                f"(residual {best[0]:.3g}, bound {factor * best[0]:.3g})",
                last_iterate=best[2].copy(),
                residual=best[0],
            )
        if stall >= 3 and best[0] <= tol:
            break
        it += 1
        cand = None
        if method == "newton":
            diag, coupling = _jacobian_parts(pop, float(np.mean(x)), gx)
            r = gx - x
            dvec = 1.0 - diag
            y = r / dvec
            w = coupling / (pop.m * dvec)
            step = y + w * (y.sum() / (1.0 - w.sum()))
            xn = x + step
            gn, rn = residual_at(xn)
            if rn < res:
                cand = (xn, gn, rn)
        if cand is None:
            xn = gx
            gn, rn = residual_at(xn)
            cand = (xn, gn, rn)
        x, gx, res = cand
        if res < best[0]:
            best = (res, x, gx)
            stall = 0
        else:
            stall += 1

    res, x, gx = best
    bound = factor * res
    prices = np.array(gx, dtype=float)
    prices.flags.writeable = False
    return EquilibriumResult(
        prices=prices,
        mean=float(np.mean(prices)),
        iterations=it,
        residual=res,
        error_bound=bound,
        bound=report,
        tol=tol,
        certified=bound <= tol,
        method=method,
    )


def closed_form_equilibrium(params: ClusterParams) -> float:
    """Equilibrium price (alpha - beta)/(2 delta) of a single-cluster population.

    Independent of gamma and of the noise scales; positive iff alpha > beta.
    """
    if not params.delta > 0:
        raise InvalidArgumentError("closed-form equilibrium requires delta > 0")
    return (params.alpha - params.beta) / (2.0 * params.delta)
