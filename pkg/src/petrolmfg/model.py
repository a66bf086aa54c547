"""Domain types and the analytic cost of a single station.

Prices are in EUR/liter and live on the whole real line; a negative model
price is a legitimate output and is never clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np

from .errors import InvalidArgumentError, ValidationError
from .numerics import std_normal_cdf, std_normal_pdf


@dataclass(frozen=True)
class ClusterParams:
    """Cost weights (alpha, beta, gamma, delta) shared by a cluster of stations.

    ``alpha`` weighs pricing under the expected average, ``beta`` pricing over
    it, ``gamma`` day-to-day price changes and ``delta`` the absolute price
    level. ``gamma = delta = 0`` is only accepted with ``degenerate=True``.
    """

    alpha: float
    beta: float
    gamma: float
    delta: float
    degenerate: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ValidationError(f"{name} must be a finite real, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.alpha <= 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")
        if self.beta <= 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")
        if self.gamma < 0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")
        if self.delta < 0:
            raise ValidationError(f"delta must be >= 0, got {self.delta}")
        zero_pair = self.gamma == 0 and self.delta == 0
        if zero_pair and not self.degenerate:
            raise ValidationError(
                "gamma = delta = 0 is the degenerate regime; pass degenerate=True to use it"
            )
        if self.degenerate and not zero_pair:
            raise ValidationError("degenerate=True requires gamma = delta = 0")

    @property
    def equilibrium_legal(self) -> bool:
        return self.delta > 0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.beta, self.gamma, self.delta)


@dataclass(frozen=True)
class Agent:
    id: Hashable
    cluster: int
    sigma: float

    def __post_init__(self):
        s = float(self.sigma)
        if not (math.isfinite(s) and s > 0):
            raise ValidationError(f"agent {self.id!r}: sigma must be > 0, got {self.sigma!r}")
        object.__setattr__(self, "sigma", s)
        if int(self.cluster) != self.cluster or self.cluster < 0:
            raise ValidationError(f"agent {self.id!r}: cluster index must be a non-negative int")
        object.__setattr__(self, "cluster", int(self.cluster))


@dataclass(frozen=True)
class Population:
    """Clusters of cost weights plus the ordered list of agents (m >= 2)."""

    clusters: tuple[ClusterParams, ...]
    agents: tuple[Agent, ...]

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.clusters:
            raise ValidationError("population needs at least one cluster")
        if len(self.agents) < 2:
            raise ValidationError(f"population needs m >= 2 agents, got {len(self.agents)}")
        k = len(self.clusters)
        for a in self.agents:
            if a.cluster >= k:
                raise ValidationError(
                    f"agent {a.id!r} refers to cluster {a.cluster} but only {k} exist"
                )
        flags = {c.degenerate for c in self.clusters}
        if len(flags) > 1:
            raise ValidationError("cannot mix degenerate and regular clusters")

    @classmethod
    def from_counts(
        cls,
        clusters: Sequence[ClusterParams],
        counts: Sequence[int],
        sigmas: float | Sequence[float],
    ) -> "Population":
        """Agents laid out cluster by cluster; scalar ``sigmas`` is broadcast."""
        if len(counts) != len(clusters):
            raise ValidationError("one count per cluster required")
        if any(int(c) != c or c < 0 for c in counts):
            raise ValidationError(f"counts must be non-negative integers, got {list(counts)}")
        labels = np.repeat(np.arange(len(clusters)), np.asarray(counts, dtype=int))
        return cls.from_labels(clusters, labels, sigmas)

    @classmethod
    def from_labels(
        cls,
        clusters: Sequence[ClusterParams],
        labels: Sequence[int],
        sigmas: float | Sequence[float],
        ids: Sequence[Hashable] | None = None,
    ) -> "Population":
        m = len(labels)
        sig = np.broadcast_to(np.asarray(sigmas, dtype=float), (m,)) if np.ndim(sigmas) == 0 \
            else np.asarray(sigmas, dtype=float)
        if sig.shape != (m,):
            raise ValidationError(f"expected {m} sigmas, got {sig.shape[0]}")
        ids = list(range(m)) if ids is None else list(ids)
        agents = [Agent(ids[i], int(labels[i]), float(sig[i])) for i in range(m)]
        return cls(tuple(clusters), tuple(agents))

    @property
    def m(self) -> int:
        return len(self.agents)

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def degenerate(self) -> bool:
        return self.clusters[0].degenerate

    @property
    def counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()

    @cached_property
    def labels(self) -> np.ndarray:
        out = np.array([a.cluster for a in self.agents], dtype=np.intp)
        out.flags.writeable = False
        return out

    @cached_property
    def sigmas(self) -> np.ndarray:
        out = np.array([a.sigma for a in self.agents], dtype=float)
        out.flags.writeable = False
        return out

    @cached_property
    def agent_params(self) -> np.ndarray:
        """(4, m) array of per-agent alpha, beta, gamma, delta."""
        table = np.array([c.as_tuple() for c in self.clusters], dtype=float)
        out = np.ascontiguousarray(table[self.labels].T)
        out.flags.writeable = False
        return out

    def with_clusters(self, clusters: Sequence[ClusterParams]) -> "Population":
        """Same agents, new cluster parameters."""
        if len(clusters) != self.k:
            raise ValidationError(f"expected {self.k} clusters, got {len(clusters)}")
        return Population(tuple(clusters), self.agents)

    def with_sigmas(self, sigmas: float | Sequence[float]) -> "Population":
        return Population.from_labels(self.clusters, self.labels, sigmas,
                                      ids=[a.id for a in self.agents])


@dataclass(frozen=True)
class MarketState:
    """Prices of all stations on one day."""

    prices: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.prices, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(p)):
            raise ValidationError("prices must be finite")
        p.flags.writeable = False
        object.__setattr__(self, "prices", p)

    @property
    def m(self) -> int:
        return self.prices.shape[0]

    @property
    def mean(self) -> float:
        return float(np.mean(self.prices))

    def __repr__(self):
        return f"MarketState(m={self.m}, mean={self.mean:.6f})"

    def __eq__(self, other):
        if not isinstance(other, MarketState):
            return NotImplemented
        return np.array_equal(self.prices, other.prices)

    __hash__ = None


def _check_sigma(sigma: float) -> None:
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be > 0, got {sigma!r}")


def cost_competition(params: ClusterParams, p_tilde: float, p: float) -> float:
    """alpha * [p_tilde - p]_+ : revenue lost by undercutting the average."""
    return params.alpha * max(p_tilde - p, 0.0)


def cost_fidelity(params: ClusterParams, p_tilde: float, p: float) -> float:
    """beta * [p - p_tilde]_+ : customers lost by pricing over the average."""
    return params.beta * max(p - p_tilde, 0.0)


def cost_reputation(params: ClusterParams, p_prev: float, p: float) -> float:
    return 0.5 * params.gamma * (p - p_prev) ** 2


def cost_absolute(params: ClusterParams, p: float) -> float:
    return 0.5 * params.delta * p * p


def total_cost(params: ClusterParams, p_tilde: float, p_prev: float, p: float) -> float:
    """Realised cost for a given estimate ``p_tilde`` of tomorrow's average."""
    return (
        cost_competition(params, p_tilde, p)
        + cost_fidelity(params, p_tilde, p)
        + cost_reputation(params, p_prev, p)
        + cost_absolute(params, p)
    )


def expected_cost(params: ClusterParams, sigma: float, p_bar: float, p_prev: float, p: float) -> float:
    """Expected cost phi(p) when the estimate is ``p_bar + sigma * eps``, eps ~ N(0,1).

    With ``z = (p - p_bar) / sigma`` the two positive-part means are
    ``sigma * (N'(z) - z * (1 - N(z)))`` and ``sigma * (N'(z) + z * N(z))``.
    """
    _check_sigma(sigma)
    z = (p - p_bar) / sigma
    pdf = std_normal_pdf(z)
    upper = std_normal_cdf(-z)  # 1 - N(z) without cancellation
    lower = std_normal_cdf(z)
    under = sigma * (pdf - z * upper)
    over = sigma * (pdf + z * lower)
    return (
        params.alpha * under
        + params.beta * over
        + cost_reputation(params, p_prev, p)
        + cost_absolute(params, p)
    )


def phi_prime(params: ClusterParams, sigma: float, p_bar: float, p_prev: float, p: float) -> float:
    """d phi / dp = -alpha (1 - N(z)) + beta N(z) + gamma (p - p_prev) + delta p."""
    _check_sigma(sigma)
    z = (p - p_bar) / sigma
    return (
        -params.alpha * std_normal_cdf(-z)
        + params.beta * std_normal_cdf(z)
        + params.gamma * (p - p_prev)
        + params.delta * p
    )


def phi_second(params: ClusterParams, sigma: float, p_bar: float, p: float) -> float:
    """d^2 phi / dp^2 = (alpha + beta) N'(z) / sigma + gamma + delta  (> 0)."""
    _check_sigma(sigma)
    z = (p - p_bar) / sigma
    return (params.alpha + params.beta) / sigma * std_normal_pdf(z) + params.gamma + params.delta
