"""Mini-batch gradient oracles and the cost-fidelity bookkeeping behind them.

A single stochastic gradient with fidelity theta has noise covariance
M(w)/theta. A mini-batch oracle of size n spends the budget B on n queries
(each at fidelity theta_n = C^-1((B - D(n))/n)) plus the aggregation cost
D(n), and its average has covariance sigma_n^2 M(w) with
sigma_n^2 = 1/(n theta_n).

Noise is Gaussian. ``query_mini_batch`` draws the averaged gradient in one
shot from its aggregate law in both bank modes; averaging n individual draws
gives the same distribution but a different random stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Vector = np.ndarray

# Feasible-batch search gives up (and asks for an explicit cap) beyond this.
SEARCH_LIMIT = 1 << 20


def _bisect_inverse(func: Callable[[float], float], y: float, tol: float = 1e-12) -> float:
    """Solve func(theta) = y for a strictly increasing func on (0, inf)."""
    lo, hi = 0.0, 1.0
    while func(hi) < y:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise ValueError(f"cost never reaches {y}")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if func(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CostModel:
    """Cost-fidelity function C, its floor c_min, aggregation cost D and budget B.

    ``inverse`` may be omitted, in which case C is inverted by bisection.
    ``max_batch`` caps the feasible batch size; it is required when the
    feasible set would otherwise be unbounded.
    """

    cost: Callable[[float], float]
    c_min: float
    aggregation: Callable[[int], float]
    budget: float
    inverse: Optional[Callable[[float], float]] = None
    max_batch: Optional[int] = None

    def __post_init__(self):
        if self.c_min < 0:
            raise ValueError("c_min must be nonnegative")
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        if self.aggregation(1) != 0:
            raise ValueError("aggregation cost must satisfy D(1) = 0")

    @classmethod
    def power(cls, budget: float, scale: float = 1.0, exponent: float = 1.0, c_min: float = 0.0,
              agg_rate: float = 0.0, max_batch: Optional[int] = None) -> "CostModel":
        """C(theta) = c_min + scale*theta^exponent, D(n) = agg_rate*(n-1)."""
        if not (scale > 0 and exponent > 0):
            raise ValueError("scale and exponent must be positive")
        if agg_rate < 0:
            raise ValueError("agg_rate must be nonnegative")
        return cls(
            cost=lambda th: c_min + scale * th**exponent,
            c_min=c_min,
            aggregation=lambda n: agg_rate * (n - 1),
            budget=budget,
            inverse=lambda y: ((y - c_min) / scale) ** (1.0 / exponent),
            max_batch=max_batch,
        )

    @classmethod
    def linear(cls, budget: float, scale: float = 1.0, c_min: float = 0.0, agg_rate: float = 0.0,
               max_batch: Optional[int] = None) -> "CostModel":
        return cls.power(budget, scale, 1.0, c_min, agg_rate, max_batch)

    def fidelity(self, spend: float) -> float:
        """C^-1(spend)."""
        if spend <= self.c_min:
            raise ValueError(f"spend {spend} does not exceed c_min={self.c_min}")
        if self.inverse is not None:
            return float(self.inverse(spend))
        return _bisect_inverse(self.cost, spend)

    def feasible(self, n: int) -> bool:
        return self.budget > n * self.c_min + self.aggregation(n)


def max_feasible_batch(cost: CostModel) -> int:
    """Largest n with B > n*c_min + D(n)."""
    if not cost.feasible(1):
        raise ValueError(f"no feasible batch size: budget {cost.budget} <= c_min + D(1)")
    limit = cost.max_batch if cost.max_batch is not None else SEARCH_LIMIT
    if cost.feasible(limit):
        if cost.max_batch is None:
            raise ValueError("feasible batch sizes look unbounded (c_min = 0 with bounded D?); "
                             "set max_batch explicitly")
        return limit
    # feasibility is monotone in n: gallop then bisect
    lo, hi = 1, 2
    while hi < limit and cost.feasible(hi):
        lo, hi = hi, min(2 * hi, limit)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cost.feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def oracle_sigma_sq(cost: CostModel, n: int) -> float:
    """sigma_n^2 = 1/(n * C^-1((B - D(n))/n))."""
    if n < 1 or n > max_feasible_batch(cost):
        raise ValueError(f"batch size {n} is not feasible")
    theta = cost.fidelity((cost.budget - cost.aggregation(n)) / n)
    return 1.0 / (n * theta)


def squared_gradient_noise(gradient: Callable[[Vector], Vector]) -> Callable[[Vector], Vector]:
    """M(w) = diag(grad F(w)_i^2), the noise shape used for strongly convex runs."""
    return lambda w: np.square(gradient(w))


@dataclass(frozen=True)
class OracleBank:
    """N mini-batch oracles for the gradient of one objective.

    ``covariance_diag`` maps w to the diagonal of M(w); it defaults to the
    squared gradient. Both callables must accept arrays with leading batch axes.
    """

    sigma_sq: tuple
    gradient: Callable[[Vector], Vector]
    covariance_diag: Optional[Callable[[Vector], Vector]] = None
    cost: Optional[CostModel] = field(default=None, compare=False)

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigma_sq)
        if not sig:
            raise ValueError("an oracle bank needs at least one oracle")
        if any(not s > 0 for s in sig):
            raise ValueError("every sigma^2 must be positive")
        object.__setattr__(self, "sigma_sq", sig)
        if self.covariance_diag is None:
            object.__setattr__(self, "covariance_diag", squared_gradient_noise(self.gradient))

    @classmethod
    def direct(cls, sigma_sq: Sequence[float], gradient, covariance_diag=None) -> "OracleBank":
        return cls(tuple(sigma_sq), gradient, covariance_diag)

    @classmethod
    def from_cost(cls, cost: CostModel, gradient, covariance_diag=None) -> "OracleBank":
        n_max = max_feasible_batch(cost)
        sig = tuple(oracle_sigma_sq(cost, n) for n in range(1, n_max + 1))
        return cls(sig, gradient, covariance_diag, cost)

    def with_sigma_sq(self, sigma_sq: Sequence[float]) -> "OracleBank":
        return OracleBank(tuple(sigma_sq), self.gradient, self.covariance_diag, self.cost)

    @property
    def n_oracles(self) -> int:
        return len(self.sigma_sq)

    @property
    def best_index(self) -> int:
        """1-based index of the smallest sigma^2 (lowest index on ties)."""
        return int(np.argmin(self.sigma_sq)) + 1

    @property
    def sigma_star_sq(self) -> float:
        return min(self.sigma_sq)

    @property
    def gaps(self) -> np.ndarray:
        sig = np.asarray(self.sigma_sq)
        return sig - sig.min()

    def trace_s(self, w: Vector) -> float:
        return float(np.sum(self.covariance_diag(np.asarray(w, dtype=float))))


@dataclass(frozen=True)
class GradientSample:
    value: np.ndarray
    oracle_index: int
    round: int = 0


def noisy_gradient(grad, cov_diag, sigma_sq, z):
    """grad + sqrt(sigma_sq * cov_diag) * z, broadcasting over batch axes."""
    return grad + np.sqrt(sigma_sq * cov_diag) * z


def query_mini_batch(bank: OracleBank, w: Vector, n: int, rng: np.random.Generator,
                     round: int = 0) -> GradientSample:
    """One draw from oracle ``n`` (1-based) at ``w``."""
    if not 1 <= n <= bank.n_oracles:
        raise ValueError(f"oracle index {n} outside 1..{bank.n_oracles}")
    w = np.asarray(w, dtype=float)
    grad = np.asarray(bank.gradient(w), dtype=float)
    z = rng.standard_normal(grad.shape[-1])
    value = noisy_gradient(grad, bank.covariance_diag(w), bank.sigma_sq[n - 1], z)
    return GradientSample(value=value, oracle_index=n, round=round)


def draw_standard_normals(rng: np.random.Generator, rounds: int, dim: int) -> np.ndarray:
    """The (rounds, dim) block of standard normals one SGD iteration consumes.

    Drawing the block at once yields the same numbers as ``rounds`` successive
    ``query_mini_batch`` calls on the same generator.
    """
    return rng.standard_normal((rounds, dim))

