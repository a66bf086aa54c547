"""Fitting clustered cost weights to an observed average-price series.

Pipeline: per-station noise scales from price volatility, k-means grouping
of stations, then box-constrained least squares on the 4K cost weights so
that the simulated daily average tracks the observed one.

Parameter vectors are flat, ordered (alpha_1, beta_1, gamma_1, delta_1, alpha_2, ...).
"""

from __future__ import annotations

import datetime as _dt
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import kernels
from .dynamics import Trajectory
from .errors import DegenerateModeError, InvalidArgumentError, ValidationError
from .model import ClusterParams, MarketState, Population

log = logging.getLogger(__name__)

SIGMA_FALLBACK = 0.027
SIGMA_FLOOR = 1e-3
MAX_CLUSTERS = 7
DEFAULT_BOUNDS = (0.10, 100.0)
FIT_ROOT_TOL = 1e-14


@dataclass(frozen=True)
class PricePanel:
    """Daily prices of m stations over T shared dates; ``prices`` has shape (m, T)."""

    station_ids: tuple
    dates: tuple
    prices: np.ndarray = field(repr=False)

    def __post_init__(self):
        ids = tuple(str(s) for s in self.station_ids)
        dates = tuple(str(d) for d in self.dates)
        p = np.array(self.prices, dtype=float)
        if p.ndim != 2 or p.shape != (len(ids), len(dates)):
            raise ValidationError(
                f"prices shape {p.shape} does not match {len(ids)} stations x {len(dates)} dates"
            )
        if len(set(ids)) != len(ids):
            raise ValidationError("station ids must be unique")
        if len(set(dates)) != len(dates):
            raise ValidationError("dates must be unique")
        if len(dates) < 2:
            raise ValidationError("price series need at least 2 days")
        if not np.all(np.isfinite(p)):
            raise ValidationError("prices must be finite")
        p.flags.writeable = False
        object.__setattr__(self, "station_ids", ids)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", p)

    @property
    def m(self) -> int:
        return self.prices.shape[0]

    @property
    def n_days(self) -> int:
        return self.prices.shape[1]

    @property
    def mean_series(self) -> np.ndarray:
        return self.prices.mean(axis=0)

    def series(self, station_id) -> np.ndarray:
        return self.prices[self.station_ids.index(str(station_id))]

    def initial_state(self) -> MarketState:
        return MarketState(self.prices[:, 0])

    def __eq__(self, other):
        if not isinstance(other, PricePanel):
            return NotImplemented
        return (self.station_ids == other.station_ids and self.dates == other.dates
                and np.array_equal(self.prices, other.prices))

    __hash__ = None


def panel_from_trajectory(
    traj: Trajectory,
    station_ids: Optional[Sequence] = None,
    start: _dt.date = _dt.date(2023, 1, 1),
) -> PricePanel:
    """Wrap simulated prices as a panel with consecutive ISO dates."""
    ids = [f"S{i:03d}" for i in range(traj.m)] if station_ids is None else list(station_ids)
    dates = [(start + _dt.timedelta(days=n)).isoformat() for n in range(len(traj))]
    return PricePanel(tuple(ids), tuple(dates), traj.prices.T)


def estimate_sigmas(panel: PricePanel, fallback: float = SIGMA_FALLBACK) -> np.ndarray:
    """Sample standard deviation (n-1) of each station's prices.

    Stations whose deviation is below 1e-3 (near-constant prices) get
    ``fallback`` instead, so every returned scale is positive.
    """
    if not fallback > 0:
        raise InvalidArgumentError(f"fallback must be > 0, got {fallback!r}")
    if panel.n_days < 2:
        raise InvalidArgumentError("need at least 2 observations per station")
    sd = panel.prices.std(axis=1, ddof=1)
    return np.where(sd < SIGMA_FLOOR, fallback, sd)


def station_features(panel: PricePanel) -> np.ndarray:
    """Standardised (mean price, price std) per station, shape (m, 2)."""
    if panel.m < 2:
        raise InvalidArgumentError("need at least 2 stations to standardise features")
    raw = np.column_stack([panel.prices.mean(axis=1), panel.prices.std(axis=1, ddof=1)])
    centred = raw - raw.mean(axis=0)
    scale = raw.std(axis=0)
    out = np.zeros_like(raw)
    ok = scale > 1e-12 * np.maximum(1.0, np.abs(raw).max(axis=0))
    out[:, ok] = centred[:, ok] / scale[ok]
    return out


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: np.ndarray = field(repr=False)
    centroids: np.ndarray = field(repr=False)
    seed: int
    inertia_history: tuple = ()
    station_ids: Optional[tuple] = None

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.intp).reshape(-1)
        if not 1 <= self.k <= MAX_CLUSTERS:
            raise ValidationError(f"k must lie in [1, {MAX_CLUSTERS}], got {self.k}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise ValidationError("labels must lie in [0, k)")
        if np.any(np.bincount(labels, minlength=self.k) == 0):
            raise ValidationError("every cluster must be non-empty")
        centroids = np.array(self.centroids, dtype=float)
        if centroids.ndim != 2 or centroids.shape[0] != self.k:
            raise ValidationError("need one centroid row per cluster")
        if self.station_ids is not None:
            ids = tuple(str(s) for s in self.station_ids)
            if len(ids) != labels.size:
                raise ValidationError("station_ids and labels differ in length")
            object.__setattr__(self, "station_ids", ids)
        labels.flags.writeable = False
        centroids.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "centroids", centroids)
        object.__setattr__(self, "inertia_history", tuple(float(v) for v in self.inertia_history))

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1] if self.inertia_history else float("nan")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "labels": self.labels.tolist(),
            "station_ids": list(self.station_ids) if self.station_ids is not None else None,
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
            "inertia_history": list(self.inertia_history),
        }


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: of 2 + log(k) D^2-sampled candidates keep the one
    that lowers the potential most."""
    n = X.shape[0]
    trials = 2 + int(np.log(k))
    centres = [X[rng.integers(n)]]
    d2 = ((X - centres[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        cand = rng.choice(n, size=trials, p=d2 / d2.sum())
        pots = np.minimum(d2[None, :], _sq_dists(X, X[cand]).T)
        best = int(np.argmin(pots.sum(axis=1)))
        centres.append(X[cand[best]])
        d2 = pots[best]
    return np.array(centres)


def kmeans(features, k: int, seed: int = 0, max_iter: int = 300, station_ids=None) -> ClusterAssignment:
    """Lloyd's algorithm from a k-means++ start.

    Deterministic for fixed (features, k, seed). The within-cluster sum of
    squares is recorded after every assignment step and never increases.
    A centroid left without points is moved onto the point farthest from its
    current centroid.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    m = X.shape[0]
    if int(k) != k or not 1 <= k <= MAX_CLUSTERS:
        raise InvalidArgumentError(f"k must be an integer in [1, {MAX_CLUSTERS}], got {k!r}")
    if k > m:
        raise InvalidArgumentError(f"k={k} exceeds the number of points m={m}")
    if max_iter < 1:
        raise InvalidArgumentError("max_iter must be >= 1")
    if np.unique(X, axis=0).shape[0] < k:
        raise InvalidArgumentError(f"fewer than k={k} distinct feature rows")

    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, C)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(m), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                C[j] = X[labels == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own = ((X - C[labels]) ** 2).sum(axis=1)
            taken = set()
            for j in empty:
                order = np.argsort(-own, kind="stable")
                far = next(i for i in order if i not in taken)
                taken.add(far)
                C[j] = X[far]
    else:
        d2 = _sq_dists(X, C)
        labels = d2.argmin(axis=1)

    # centroids of the final partition (a fixed point of assign-then-update)
    for j in range(k):
        C[j] = X[labels == j].mean(axis=0)
    return ClusterAssignment(k, labels, C, int(seed), tuple(history), station_ids)


def params_to_vector(params: Sequence[ClusterParams]) -> np.ndarray:
    return np.array([v for c in params for v in c.as_tuple()], dtype=float)


def params_from_vector(x) -> list[ClusterParams]:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size % 4:
        raise InvalidArgumentError("parameter vector length must be a multiple of 4")
    return [ClusterParams(*x[4 * j:4 * j + 4]) for j in range(x.size // 4)]


def _simulated_means(x, labels, sigmas, x0, days, tol):
    per_agent = np.asarray(x, dtype=float).reshape(-1, 4)[labels]
    a, b, g, d = (np.ascontiguousarray(per_agent[:, j]) for j in range(4))
    if days == 0:
        return np.array([x0.mean()])
    return kernels.simulate_prices(a, b, g, d, sigmas, x0, days, tol).mean(axis=1)


def _check_subsample(subsample, length):
    if subsample is None:
        return np.arange(length)
    idx = np.asarray(subsample, dtype=np.intp).reshape(-1)
    if idx.size == 0:
        raise InvalidArgumentError("subsample must not be empty")
    if np.any(np.diff(idx) <= 0):
        raise InvalidArgumentError("subsample indices must be strictly increasing")
    if idx[0] < 0 or idx[-1] >= length:
        raise InvalidArgumentError(f"subsample indices must lie in [0, {length})")
    return idx


def model_residuals(
    params,
    pop_template: Population,
    initial: MarketState,
    observed_means,
    subsample=None,
    tol: float = FIT_ROOT_TOL,
) -> np.ndarray:
    """Simulated minus observed daily average on the selected days.

    ``params`` is a sequence of K ClusterParams (or the flat 4K vector); the
    template supplies the agents' cluster labels and noise scales.
    """
    if isinstance(params, np.ndarray) or (len(params) and not isinstance(params[0], ClusterParams)):
        params = params_from_vector(params)
    if len(params) != pop_template.k:
        raise InvalidArgumentError(f"expected {pop_template.k} parameter sets, got {len(params)}")
    if any(c.gamma + c.delta == 0 for c in params):
        raise DegenerateModeError("calibration does not accept gamma = delta = 0 clusters")
    obs = np.asarray(observed_means, dtype=float).reshape(-1)
    if obs.size < 2:
        raise InvalidArgumentError("need at least 2 observed averages")
    if initial.m != pop_template.m:
        raise InvalidArgumentError("initial state does not match the population size")
    if abs(obs[0] - initial.mean) > 1e-6:
        warnings.warn(
            f"observed day-0 average {obs[0]:.6f} differs from the initial state's "
            f"{initial.mean:.6f}",
            stacklevel=2,
        )
    idx = _check_subsample(subsample, obs.size)
    sim = _simulated_means(params_to_vector(params), pop_template.labels, pop_template.sigmas,
                           initial.prices, int(idx[-1]), tol)
    return sim[idx] - obs[idx]


@dataclass(frozen=True)
class FitConfig:
    """Settings of the multistart least-squares fit.

    ``starts`` are pinned starting vectors tried first; the remaining
    ``multistart - len(starts)`` starts are drawn log-uniformly in the box.
    """

    bounds: tuple = DEFAULT_BOUNDS
    seed: int = 0
    multistart: int = 8
    subsample: Optional[tuple] = None
    max_evals: int = 2000
    starts: tuple = ()
    root_tol: float = FIT_ROOT_TOL

    def __post_init__(self):
        lo, hi = (float(v) for v in self.bounds)
        if not (0 < lo <= hi) or not np.isfinite(hi):
            raise InvalidArgumentError(f"bounds must satisfy 0 < lo <= hi, got {self.bounds}")
        object.__setattr__(self, "bounds", (lo, hi))
        if self.multistart < 1:
            raise InvalidArgumentError("multistart must be >= 1")
        if self.max_evals < 1:
            raise InvalidArgumentError("max_evals must be >= 1")
        if self.subsample is not None:
            idx = tuple(int(i) for i in self.subsample)
            if not idx or any(b <= a for a, b in zip(idx, idx[1:])) or idx[0] < 0:
                raise InvalidArgumentError("subsample must be non-empty, strictly increasing, >= 0")
            object.__setattr__(self, "subsample", idx)
        object.__setattr__(self, "starts", tuple(np.asarray(s, dtype=float) for s in self.starts))


@dataclass(frozen=True)
class FitResult:
    params: tuple
    objective: float
    residual_series: np.ndarray = field(repr=False)
    evals: int
    converged: bool
    start_index: int = 0
    start_objectives: tuple = ()
    final_objectives: tuple = ()

    def to_dict(self) -> dict:
        return {
            "params": [
                {"alpha": c.alpha, "beta": c.beta, "gamma": c.gamma, "delta": c.delta}
                for c in self.params
            ],
            "objective": self.objective,
            "residual_series": self.residual_series.tolist(),
            "evals": self.evals,
            "converged": self.converged,
            "start_index": self.start_index,
            "start_objectives": list(self.start_objectives),
            "final_objectives": list(self.final_objectives),
        }


def _start_points(config: FitConfig, n: int) -> list[np.ndarray]:
    lo, hi = config.bounds
    starts = []
    for s in config.starts:
        if s.shape != (n,):
            raise InvalidArgumentError(f"pinned start must have length {n}, got {s.shape}")
        starts.append(np.clip(s, lo, hi))
    rng = np.random.default_rng(config.seed)
    for _ in range(max(config.multistart - len(starts), 0)):
        starts.append(np.exp(rng.uniform(np.log(lo), np.log(hi), n)))
    return starts


def fit(
    panel: PricePanel,
    assignment: ClusterAssignment,
    config: FitConfig = FitConfig(),
    sigmas=None,
) -> FitResult:
    """Least-squares fit of K cost-weight tuples to the panel's average price.

    The model starts from the panel's first-day prices and is compared with
    the observed average on every (or every subsampled) day. Each start is
    refined with a bounded trust-region reflective solver; the best local
    optimum over all starts wins, ties broken by start order.
    """
    if assignment.labels.size != panel.m:
        raise InvalidArgumentError(
            f"assignment covers {assignment.labels.size} stations, panel has {panel.m}"
        )
    if assignment.station_ids is not None and assignment.station_ids != panel.station_ids:
        raise InvalidArgumentError("assignment station ids do not match the panel")
    if sigmas is None:
        sigmas = estimate_sigmas(panel)
    sig = np.ascontiguousarray(np.broadcast_to(np.asarray(sigmas, dtype=float), (panel.m,)))
    if np.any(~(sig > 0)):
        raise InvalidArgumentError("sigmas must be positive")

    labels = assignment.labels
    obs = panel.mean_series
    idx = _check_subsample(config.subsample, obs.size)
    x0_prices = np.ascontiguousarray(panel.prices[:, 0])
    days = int(idx[-1])
    n = 4 * assignment.k
    lo, hi = config.bounds
    evals = 0

    def residuals(x):
        nonlocal evals
        evals += 1
        return _simulated_means(x, labels, sig, x0_prices, days, config.root_tol)[idx] - obs[idx]

    outcomes = []
    for i, start in enumerate(_start_points(config, n)):
        r0 = residuals(start)
        f0 = float(r0 @ r0)
        if lo == hi:
            outcomes.append((f0, i, start, True, f0))
            continue
        sol = least_squares(
            residuals, start, bounds=(lo, hi), method="trf", x_scale="jac",
            ftol=1e-10, xtol=1e-10, gtol=1e-10, max_nfev=config.max_evals,
        )
        x = np.clip(sol.x, lo, hi)
        r = residuals(x)
        f = float(r @ r)
        if f > f0:  # never hand back something worse than the start
            x, f = start, f0
        log.debug("start %d: %.3e -> %.3e (status %d)", i, f0, f, sol.status)
        outcomes.append((f, i, x, sol.status > 0, f0))

    best = min(outcomes, key=lambda o: (o[0], o[1]))
    f, i, x, ok, _ = best
    r = residuals(x)
    return FitResult(
        params=tuple(params_from_vector(x)),
        objective=float(r @ r),
        residual_series=r,
        evals=evals,
        converged=bool(ok),
        start_index=i,
        start_objectives=tuple(o[4] for o in outcomes),
        final_objectives=tuple(o[0] for o in outcomes),
    )
