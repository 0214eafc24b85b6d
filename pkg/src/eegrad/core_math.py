"""Closed-form quantities behind EE-Grad.

Confidence radius and its inverse, the variance-excess constants of the
averaged gradient, contraction factors for strongly convex SGD, and the
block-matrix identities used to verify the trace-of-covariance estimator.
Everything here is a pure function.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Gaps below this are treated as ties with the best oracle.
GAP_TOL = 1e-12
# Size cap (gamma * d) for the dense verification path.
MAX_DENSE_SIZE = 10_000


@dataclass(frozen=True)
class EEGradParams:
    """Algorithm constants shared by the selector and the bound calculators.

    ``c_const`` is the Hanson-Wright absolute constant. The same value is used
    by the confidence radius and by its inverse.
    """

    alpha: float
    beta: float
    p_bound: float
    dim: int
    rounds: int
    c_const: float = 1.0

    def __post_init__(self):
        if not self.alpha > 2:
            raise ValueError(f"alpha must be > 2, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not self.p_bound > 0:
            raise ValueError(f"p_bound must be > 0, got {self.p_bound}")
        if not self.c_const > 0:
            raise ValueError(f"c_const must be > 0, got {self.c_const}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValueError(f"rounds must be a positive integer, got {self.rounds}")

    def check_bank(self, sigma_sq: Sequence[float], trace_s: float | None = None) -> list[str]:
        """Return human-readable violations of the standing assumptions."""
        problems = []
        n = len(sigma_sq)
        if max(sigma_sq) > self.beta:
            problems.append(f"beta={self.beta} is below max sigma^2={max(sigma_sq)}")
        if trace_s is not None and trace_s > self.p_bound:
            problems.append(f"p_bound={self.p_bound} is below S(w)={trace_s}")
        if self.rounds < 2 * n + 1:
            problems.append(f"rounds={self.rounds} is below 2N+1={2 * n + 1}")
        return problems


@dataclass(frozen=True)
class GapConstants:
    c1: float
    c2: float
    z_t: float


def _scalar_or_array(x):
    arr = np.asarray(x, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def conf_radius_raw(x, beta, p_bound, c_const, dim):
    """f(x) with explicit constants; ``p_bound`` may be an array."""
    scale = beta * p_bound
    return scale * np.sqrt(x * dim / c_const) * np.maximum(1.0, np.sqrt(x / (c_const * dim)))


def conf_radius(x, params: EEGradParams):
    """Confidence radius f(x) = beta*P*sqrt(x*d/c) * max(1, sqrt(x/(c*d)))."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("conf_radius is defined for x >= 0")
    return _scalar_or_array(conf_radius_raw(x, params.beta, params.p_bound, params.c_const, params.dim))


def conf_radius_inverse(eps, params: EEGradParams):
    """phi(eps) = (c*eps/(beta*P)) * min(1, (eps/d)/(beta*P)); inverse of f."""
    eps = np.asarray(eps, dtype=float)
    if np.any(eps < 0):
        raise ValueError("conf_radius_inverse is defined for eps >= 0")
    bp = params.beta * params.p_bound
    out = (params.c_const * eps / bp) * np.minimum(1.0, (eps / params.dim) / bp)
    return _scalar_or_array(out)


def gap_constants(sigmas: Sequence[float], trace_s: float, params: EEGradParams) -> GapConstants:
    """C1(w), C2 and Z_T(w) for a bank with variance factors ``sigmas``."""
    sig = np.asarray(sigmas, dtype=float)
    if sig.size == 0:
        raise ValueError("sigmas must be nonempty")
    if np.any(sig <= 0):
        raise ValueError("every sigma^2 must be positive")
    if not trace_s > 0:
        raise ValueError(f"trace_s must be positive, got {trace_s}")

    best = float(sig.min())
    gaps = sig - best
    c1 = 0.0
    for delta in gaps:
        if delta < GAP_TOL:
            continue
        c1 += params.alpha * delta / conf_radius_inverse(delta * trace_s / 2.0, params)
    c2 = float(gaps.sum()) * 2.0 * (params.alpha - 1.0) / (params.alpha - 2.0)
    T = params.rounds
    z_t = best / T + (math.log(T) / T**2) * c1 + c2 / T**2
    return GapConstants(c1=float(c1), c2=c2, z_t=z_t)


def max_step_size(L: float, z_t: float) -> float:
    """Upper limit 2/(L(1+Z_T)) on the step size."""
    return 2.0 / (L * (1.0 + z_t))


def contraction_factors(eta: float, m: float, L: float, sigma_star_sq: float, z_t: float,
                        rounds: int) -> tuple[float, float]:
    """Per-iteration gap contraction of the optimal-oracle and EE-Grad SGD.

    Returns ``(tau_opt, tau_alg)`` where
    ``tau_opt = m*L*eta^2*(1 + sigma*^2/T) - 2*m*eta + 1`` and
    ``tau_alg = tau_opt + m*L*eta^2*(z_t - sigma*^2/T)``.
    """
    if not (m > 0 and L > 0):
        raise ValueError("m and L must be positive")
    base = sigma_star_sq / rounds
    excess = z_t - base
    if excess < -1e-12 * max(1.0, abs(base)):
        raise ValueError(f"z_t={z_t} is below sigma*^2/T={base}")
    excess = max(excess, 0.0)
    limit = max_step_size(L, z_t)
    if not 0 < eta < limit:
        raise ValueError(f"step size {eta} violates 0 < eta < 2/(L(1+Z_T)) = {limit}")
    tau_opt = m * L * eta**2 * (1.0 + base) - 2.0 * m * eta + 1.0
    tau_alg = tau_opt + m * L * eta**2 * excess
    if tau_opt <= 0:
        warnings.warn(f"tau_opt={tau_opt:.3g} is not positive; the bound is trivially satisfied",
                      RuntimeWarning, stacklevel=2)
    return tau_opt, tau_alg


def block_matrix(gamma: int, d: int) -> np.ndarray:
    """Dense A = (gamma-1)^-1 (I - gamma^-1 E), E made of d x d identity blocks."""
    if gamma < 2:
        raise ValueError(f"gamma must be >= 2, got {gamma}")
    if gamma * d > MAX_DENSE_SIZE:
        raise ValueError(f"gamma*d={gamma * d} exceeds the dense cap {MAX_DENSE_SIZE}")
    E = np.kron(np.ones((gamma, gamma)), np.eye(d))
    return (np.eye(gamma * d) - E / gamma) / (gamma - 1)


def quadratic_form_trace(samples) -> float:
    """Trace of the sample covariance, evaluated as s^T A s on the stacked samples.

    Verification oracle only: it materializes the dense block matrix.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2:
        raise ValueError("samples must be a list of equal-length vectors")
    gamma, d = arr.shape
    if gamma < 2:
        raise ValueError("need at least 2 samples")
    s = arr.reshape(-1)
    return float(s @ block_matrix(gamma, d) @ s)


def block_matrix_norms(gamma: int, d: int) -> tuple[float, float]:
    """Closed-form (||A||_F^2, ||A||_op) of the block matrix."""
    if gamma < 2:
        raise ValueError(f"gamma must be >= 2, got {gamma}")
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    return d / (gamma - 1), 1.0 / (gamma - 1)


def regret_threshold(delta_n: float, trace_s: float, params: EEGradParams) -> int:
    """Pull-count scale ceil(alpha*ln T / phi(delta_n*S/2)) of a suboptimal oracle."""
    if not delta_n > 0:
        raise ValueError("regret threshold is undefined for a zero gap")
    if not trace_s > 0:
        raise ValueError("trace_s must be positive")
    if params.rounds < 2:
        raise ValueError("rounds must be >= 2")
    phi = conf_radius_inverse(delta_n * trace_s / 2.0, params)
    return int(math.ceil(params.alpha * math.log(params.rounds) / phi))
