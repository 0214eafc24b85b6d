"""The EE-Grad round loop run inside one SGD iteration.

Each oracle is pulled twice (order 1,1,2,2,...,N,N), then every later round
t picks the oracle minimizing ``V_t(n) - f(alpha*ln(t)/(gamma_t(n)-1))``,
lowest index on ties. The output gradient is the plain average of all T
returned samples, initialization rounds included.

Two implementations share the arithmetic: ``run_iteration`` walks one
realization through the stateful API, ``run_iteration_batch`` advances many
independent realizations in lockstep for Monte Carlo work. Fed the same
standard normals they agree bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_math import EEGradParams, conf_radius_raw
from .oracle_model import GradientSample, OracleBank, noisy_gradient, query_mini_batch


@dataclass
class OracleStats:
    """Streaming pull count, mean and sum of squared deviations of one oracle."""

    pulls: int
    mean: np.ndarray
    sq_dev: float = 0.0

    @property
    def trace_cov(self) -> float:
        """Trace of the sample covariance (denominator pulls - 1)."""
        if self.pulls < 2:
            return float("nan")
        return self.sq_dev / (self.pulls - 1)

    def push(self, x: np.ndarray) -> None:
        n = self.pulls + 1
        delta = x - self.mean
        mean = self.mean + delta / n
        self.sq_dev = self.sq_dev + np.sum(delta * (x - mean))
        self.mean = mean
        self.pulls = n


@dataclass
class SelectorState:
    stats: list
    dim: int
    round: int = 0
    sum_of_samples: np.ndarray = None
    pull_log: list = field(default_factory=list)

    def __post_init__(self):
        if self.sum_of_samples is None:
            self.sum_of_samples = np.zeros(self.dim)

    @property
    def n_oracles(self) -> int:
        return len(self.stats)

    @property
    def pull_counts(self) -> list[int]:
        return [s.pulls for s in self.stats]

    @property
    def initialized(self) -> bool:
        return self.round >= 2 * self.n_oracles


@dataclass(frozen=True)
class IterationOutput:
    gradient: np.ndarray
    pull_counts: list
    pseudo_regret: float
    pull_log: list = field(default=None, repr=False)


def init_state(n_oracles: int, dim: int) -> SelectorState:
    if n_oracles < 1 or dim < 1:
        raise ValueError("need at least one oracle and one dimension")
    return SelectorState(stats=[OracleStats(0, np.zeros(dim)) for _ in range(n_oracles)], dim=dim)


def _scores(pulls, sq_dev, t: int, params: EEGradParams, p_bound):
    """V_t(n) - f(alpha ln t / (gamma - 1)); arrays broadcast over oracles."""
    dof = pulls - 1.0
    x = params.alpha * math.log(t) / dof
    return sq_dev / dof - conf_radius_raw(x, params.beta, p_bound, params.c_const, params.dim)


def select_oracle(state: SelectorState, params: EEGradParams) -> int:
    """1-based index of the oracle to pull in round ``state.round + 1``."""
    if not state.initialized or min(state.pull_counts) < 2:
        raise RuntimeError("select_oracle called before every oracle was pulled twice")
    pulls = np.array(state.pull_counts, dtype=float)
    sq_dev = np.array([s.sq_dev for s in state.stats], dtype=float)
    scores = _scores(pulls, sq_dev, state.round + 1, params, params.p_bound)
    return int(np.argmin(scores)) + 1


def next_oracle(state: SelectorState, params: EEGradParams) -> int:
    """Forced initialization pull or the selection rule, whichever applies."""
    if not state.initialized:
        return state.round // 2 + 1
    return select_oracle(state, params)


def update_stats(state: SelectorState, oracle: int, sample: GradientSample) -> SelectorState:
    x = np.asarray(sample.value, dtype=float)
    if x.shape != (state.dim,):
        raise ValueError(f"sample has shape {x.shape}, expected ({state.dim},)")
    if not 1 <= oracle <= state.n_oracles:
        raise ValueError(f"oracle index {oracle} outside 1..{state.n_oracles}")
    state.stats[oracle - 1].push(x)
    state.round += 1
    state.sum_of_samples = state.sum_of_samples + x
    state.pull_log.append((state.round, oracle))
    return state


def _check_rounds(n_oracles: int, rounds: int) -> None:
    if rounds < 2 * n_oracles + 1:
        raise ValueError(f"T={rounds} is too small for {n_oracles} oracles; "
                         f"need T >= {2 * n_oracles + 1}")


def pseudo_regret(sigma_sq, pull_counts, trace_s) -> np.ndarray:
    """sum_n Delta_n gamma_T(n) S(w); diagnostics only, reads the true variances."""
    sig = np.asarray(sigma_sq, dtype=float)
    return (np.asarray(pull_counts) @ (sig - sig.min())) * trace_s


def run_iteration(bank: OracleBank, w, params: EEGradParams, rng: np.random.Generator,
                  include_init: bool = True) -> IterationOutput:
    """One full T-round EE-Grad procedure at the iterate ``w``."""
    N, T = bank.n_oracles, params.rounds
    _check_rounds(N, T)
    w = np.asarray(w, dtype=float)
    state = init_state(N, w.shape[-1])
    init_sum = None
    for _ in range(T):
        if state.round == 2 * N:
            init_sum = state.sum_of_samples.copy()
        n = next_oracle(state, params)
        update_stats(state, n, query_mini_batch(bank, w, n, rng, round=state.round + 1))
    if include_init:
        gradient = state.sum_of_samples / T
    else:
        gradient = (state.sum_of_samples - init_sum) / (T - 2 * N)
    regret = float(pseudo_regret(bank.sigma_sq, state.pull_counts, bank.trace_s(w)))
    return IterationOutput(gradient, state.pull_counts, regret, state.pull_log)


def run_iteration_batch(sigma_sq, grad: np.ndarray, cov_diag: np.ndarray, params: EEGradParams,
                        z: np.ndarray, p_bound=None, include_init: bool = True):
    """Vectorized ``run_iteration`` over R independent realizations.

    ``grad`` and ``cov_diag`` have shape (R, d); ``z`` holds the standard
    normals, shape (R, T, d). ``p_bound`` optionally gives one trace bound per
    realization. Returns ``(gradients (R, d), pull_counts (R, N))``.
    """
    sig = np.asarray(sigma_sq, dtype=float)
    N, T = sig.size, params.rounds
    _check_rounds(N, T)
    R, d = grad.shape
    if z.shape != (R, T, d):
        raise ValueError(f"noise block has shape {z.shape}, expected {(R, T, d)}")
    p = params.p_bound if p_bound is None else np.asarray(p_bound, dtype=float).reshape(R, 1)

    pulls = np.zeros((R, N), dtype=np.int64)
    mean = np.zeros((R, N, d))
    sq_dev = np.zeros((R, N))
    total = np.zeros((R, d))
    init_total = None
    rows = np.arange(R)
    for t in range(1, T + 1):
        if t <= 2 * N:
            arm = np.full(R, (t - 1) // 2)
        else:
            arm = np.argmin(_scores(pulls.astype(float), sq_dev, t, params, p), axis=1)
        x = noisy_gradient(grad, cov_diag, sig[arm][:, None], z[:, t - 1])
        n = pulls[rows, arm] + 1
        old = mean[rows, arm]
        delta = x - old
        new = old + delta / n[:, None]
        sq_dev[rows, arm] = sq_dev[rows, arm] + np.sum(delta * (x - new), axis=1)
        mean[rows, arm] = new
        pulls[rows, arm] = n
        total = total + x
        if t == 2 * N:
            init_total = total.copy()
    if include_init:
        return total / T, pulls
    return (total - init_total) / (T - 2 * N), pulls
