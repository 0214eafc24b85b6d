"""Outer SGD loops: EE-Grad, the optimal-oracle baseline and fixed-oracle arms.

``run_*_sgd`` drive a single realization from a Generator; the ``*_batch``
functions advance R realizations at once from per-realization noise blocks
and are what the experiment harness uses. Both consume one (T, d) block of
standard normals per iteration, so a realization follows the same path either
way.

The step-size condition 0 < eta_k < 2/(L(1 + Z_T(w_k))) needs the true
variances, so it is checked by the harness, not by the algorithm.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core_math import EEGradParams, contraction_factors, gap_constants, max_step_size
from .oracle_model import OracleBank, draw_standard_normals, noisy_gradient
from .selector import pseudo_regret, run_iteration, run_iteration_batch

log = logging.getLogger(__name__)

STEP_CHECK_MODES = ("strict", "warn", "off")


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Objective:
    """A strongly convex objective with Lipschitz gradient and known minimizer.

    ``value`` and ``gradient`` must accept arrays with leading batch axes.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    strong_convexity: float
    lipschitz: float
    minimizer: np.ndarray
    min_value: float = 0.0
    name: str = "objective"

    def gap(self, w) -> np.ndarray:
        return self.value(np.asarray(w, dtype=float)) - self.min_value


def quadratic(dim: int = 2, curvature: Optional[Sequence[float]] = None) -> Objective:
    """F(w) = sum_i a_i w_i^2 / 2; with unit curvature this is w^T w / 2."""
    a = np.ones(dim) if curvature is None else np.asarray(curvature, dtype=float)
    if a.shape != (dim,) or np.any(a <= 0):
        raise ValueError("curvature must be a positive vector of length dim")
    return Objective(
        value=lambda w: 0.5 * np.sum(a * np.square(w), axis=-1),
        gradient=lambda w: a * w,
        strong_convexity=float(a.min()),
        lipschitz=float(a.max()),
        minimizer=np.zeros(dim),
        min_value=0.0,
        name="quadratic",
    )


@dataclass
class SGDTrace:
    iterates: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    pull_counts_per_iter: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    pseudo_regret: list = field(default_factory=list)


def sgd_step(w, gradient_estimate, eta: float) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    g = np.asarray(gradient_estimate, dtype=float)
    if w.shape != g.shape:
        raise ValueError(f"iterate shape {w.shape} does not match gradient shape {g.shape}")
    return w - eta * g


def step_schedule(eta, k_iters: int) -> list[float]:
    if np.isscalar(eta):
        etas = [float(eta)] * k_iters
    else:
        etas = [float(e) for e in eta]
        if len(etas) != k_iters:
            raise ValueError(f"step schedule has {len(etas)} entries, expected {k_iters}")
    if any(not e > 0 for e in etas):
        raise ValueError("step sizes must be positive")
    return etas


def params_at(params: EEGradParams, w, bank: OracleBank, p_margin: Optional[float]) -> EEGradParams:
    """Params with P re-derived as p_margin * S(w) when a margin is given."""
    if p_margin is None:
        return params
    s = bank.trace_s(w)
    return replace(params, p_bound=p_margin * s) if s > 0 else params


def ee_grad_z(bank: OracleBank, w, params: EEGradParams) -> float:
    """Z_T(w) from the true variances; sigma*^2/T when there is no noise at w."""
    s = bank.trace_s(w)
    if s <= 0:
        return bank.sigma_star_sq / params.rounds
    return gap_constants(bank.sigma_sq, s, params).z_t


def check_step(eta: float, L: float, z_t: float, k: int, mode: str) -> bool:
    """Apply the step-size condition in the given mode; True when it holds."""
    if mode not in STEP_CHECK_MODES:
        raise ValueError(f"step check mode must be one of {STEP_CHECK_MODES}")
    limit = max_step_size(L, z_t)
    if 0 < eta < limit:
        return True
    msg = f"iteration {k}: step size {eta} violates eta < 2/(L(1+Z_T)) = {limit:.6g}"
    if mode == "strict":
        raise StepSizeError(msg)
    if mode == "warn":
        log.warning(msg)
    return False


def _finish(trace: SGDTrace, objective: Objective, w) -> None:
    trace.iterates.append(np.array(w))
    trace.gaps.append(float(objective.gap(w)))


def run_ee_grad_sgd(objective: Objective, bank: OracleBank, params: EEGradParams, eta, k_iters: int,
                    rng: np.random.Generator, w0, step_check: str = "warn",
                    p_margin: Optional[float] = None, include_init: bool = True) -> SGDTrace:
    """K iterations of SGD driven by a fresh EE-Grad procedure per iteration."""
    etas = step_schedule(eta, k_iters)
    trace = SGDTrace(step_sizes=etas)
    w = np.asarray(w0, dtype=float)
    for k, step in enumerate(etas, start=1):
        _finish(trace, objective, w)
        p_k = params_at(params, w, bank, p_margin)
        if step_check != "off":
            check_step(step, objective.lipschitz, ee_grad_z(bank, w, p_k), k, step_check)
        out = run_iteration(bank, w, p_k, rng, include_init=include_init)
        trace.pull_counts_per_iter.append(out.pull_counts)
        trace.pseudo_regret.append(out.pseudo_regret)
        w = sgd_step(w, out.gradient, step)
    _finish(trace, objective, w)
    return trace


def run_fixed_oracle_sgd(objective: Objective, bank: OracleBank, params: EEGradParams, eta,
                         k_iters: int, rng: np.random.Generator, w0, oracle: int,
                         step_check: str = "off") -> SGDTrace:
    """SGD that averages T draws of one fixed oracle (1-based) per iteration."""
    if not 1 <= oracle <= bank.n_oracles:
        raise ValueError(f"oracle index {oracle} outside 1..{bank.n_oracles}")
    etas = step_schedule(eta, k_iters)
    trace = SGDTrace(step_sizes=etas)
    sig = bank.sigma_sq[oracle - 1]
    T = params.rounds
    w = np.asarray(w0, dtype=float)
    counts = [0] * bank.n_oracles
    counts[oracle - 1] = T
    for k, step in enumerate(etas, start=1):
        _finish(trace, objective, w)
        if step_check != "off":
            check_step(step, objective.lipschitz, sig / T, k, step_check)
        z = draw_standard_normals(rng, T, w.shape[-1])
        samples = noisy_gradient(objective.gradient(w), bank.covariance_diag(w), sig, z)
        trace.pull_counts_per_iter.append(list(counts))
        trace.pseudo_regret.append(float(pseudo_regret(bank.sigma_sq, counts, bank.trace_s(w))))
        w = sgd_step(w, samples.mean(axis=0), step)
    _finish(trace, objective, w)
    return trace


def run_optimal_oracle_sgd(objective: Objective, bank: OracleBank, params: EEGradParams, eta,
                           k_iters: int, rng: np.random.Generator, w0,
                           step_check: str = "warn") -> SGDTrace:
    """Baseline that queries the true best oracle in every round."""
    return run_fixed_oracle_sgd(objective, bank, params, eta, k_iters, rng, w0,
                                bank.best_index, step_check)


def predicted_contraction(objective: Objective, bank: OracleBank, params: EEGradParams, eta: float,
                          w) -> tuple[float, float]:
    """(tau_opt, tau_alg) at ``w`` with S(w) taken from the bank's noise shape."""
    s = bank.trace_s(w)
    if not s > 0:
        raise ValueError("S(w) is zero at this iterate; the constants are undefined")
    z = gap_constants(bank.sigma_sq, s, params).z_t
    return contraction_factors(eta, objective.strong_convexity, objective.lipschitz,
                               bank.sigma_star_sq, z, params.rounds)


# -- batched realizations ---------------------------------------------------

@dataclass
class BatchTrace:
    """Per-realization gaps (R, K+1), pull counts (R, K, N) and regret (R, K)."""

    gaps: np.ndarray
    pulls: np.ndarray
    pseudo_regret: np.ndarray
    trace_s: np.ndarray
    step_violations: int = 0


NoiseSource = Callable[[int], np.ndarray]
BankSchedule = Union[OracleBank, Sequence[OracleBank]]


def bank_at(bank: BankSchedule, k: int) -> OracleBank:
    """The bank in force at 0-based iteration k (a single bank applies to all)."""
    return bank if isinstance(bank, OracleBank) else bank[k]


def ee_grad_sgd_batch(objective: Objective, bank: BankSchedule, params: EEGradParams, etas, w0,
                      noise: NoiseSource, p_margin: Optional[float] = None,
                      p_bounds=None, step_check: str = "off",
                      include_init: bool = True) -> BatchTrace:
    """EE-Grad SGD for R realizations; ``noise(k)`` returns the (R, T, d) block.

    ``p_margin`` re-derives P per realization and iteration as margin * S(w_k);
    otherwise ``p_bounds`` (one per realization) or ``params.p_bound`` is used.
    ``bank`` may also be a list with one bank per iteration (same oracle count).
    """
    w = np.array(w0, dtype=float)
    R = w.shape[0]
    K = len(etas)
    N = bank_at(bank, 0).n_oracles
    gaps = np.empty((R, K + 1))
    pulls = np.empty((R, K, N), dtype=np.int64)
    regret = np.empty((R, K))
    traces = np.empty((R, K))
    violations = 0
    for k, step in enumerate(etas):
        bank_k = bank_at(bank, k)
        gaps[:, k] = objective.gap(w)
        grad = objective.gradient(w)
        cov = bank_k.covariance_diag(w)
        s = cov.sum(axis=1)
        traces[:, k] = s
        if p_margin is not None:
            p = np.where(s > 0, p_margin * s, params.p_bound)
        elif p_bounds is not None:
            p = np.asarray(p_bounds, dtype=float)
        else:
            p = None
        if step_check != "off":
            for r in range(R):
                p_r = params if p is None else replace(params, p_bound=float(p[r]))
                z_t = ee_grad_z(bank_k, w[r], p_r)
                if not check_step(step, objective.lipschitz, z_t, k + 1, step_check):
                    violations += 1
        g, n = run_iteration_batch(bank_k.sigma_sq, grad, cov, params, noise(k), p,
                                   include_init=include_init)
        pulls[:, k] = n
        regret[:, k] = (n @ bank_k.gaps) * s
        w = w - step * g
    gaps[:, K] = objective.gap(w)
    return BatchTrace(gaps, pulls, regret, traces, violations)


def fixed_oracle_sgd_batch(objective: Objective, bank: BankSchedule, params: EEGradParams, etas,
                           w0, noise: NoiseSource, oracle: Optional[int],
                           step_check: str = "off") -> BatchTrace:
    """Fixed-oracle SGD for R realizations.

    ``oracle`` is a 1-based index, or None for the best oracle of each
    iteration's bank (the optimal baseline).
    """
    w = np.array(w0, dtype=float)
    R = w.shape[0]
    K = len(etas)
    N = bank_at(bank, 0).n_oracles
    T = params.rounds
    gaps = np.empty((R, K + 1))
    pulls = np.zeros((R, K, N), dtype=np.int64)
    regret = np.empty((R, K))
    traces = np.empty((R, K))
    violations = 0
    for k, step in enumerate(etas):
        bank_k = bank_at(bank, k)
        n = bank_k.best_index if oracle is None else oracle
        sig = bank_k.sigma_sq[n - 1]
        pulls[:, k, n - 1] = T
        gaps[:, k] = objective.gap(w)
        grad = objective.gradient(w)
        cov = bank_k.covariance_diag(w)
        s = cov.sum(axis=1)
        traces[:, k] = s
        if step_check != "off" and not check_step(step, objective.lipschitz, sig / T, k + 1,
                                                  step_check):
            violations += R
        samples = noisy_gradient(grad[:, None, :], cov[:, None, :], sig, noise(k))
        regret[:, k] = bank_k.gaps[n - 1] * T * s
        w = w - step * samples.mean(axis=1)
    gaps[:, K] = objective.gap(w)
    return BatchTrace(gaps, pulls, regret, traces, violations)


def mean_gap_ratio(gaps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ratios mean_gap[k+1]/mean_gap[k] with delta-method standard errors."""
    R = gaps.shape[0]
    mean = gaps.mean(axis=0)
    ratio = mean[1:] / mean[:-1]
    resid = (gaps[:, 1:] - ratio * gaps[:, :-1]) / mean[:-1]
    se = resid.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.full(ratio.shape, np.nan)
    return ratio, se
