"""Seeded Monte Carlo harness: config loading, ensembles, aggregation, output.

Config files are TOML. Top-level keys describe the run; tables ``objective``,
``bank``, ``sigma_scaling``, ``algorithm``, ``regret`` and ``constants``
configure the parts. Unknown keys are rejected with their dotted location.

Realization ``r`` of algorithm ``a`` at trial count ``T`` draws its noise from
``SeedSequence([base_seed, T, tag(a), r])``; with ``seed_policy = "common"``
every algorithm shares one tag (common random numbers). The initial iterate
of realization ``r`` comes from its own stream and is shared by all
algorithms. Aggregation runs in realization order, so output files do not
depend on the thread count.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .core_math import EEGradParams, contraction_factors, gap_constants
from .oracle_model import CostModel, OracleBank
from .selector import run_iteration_batch
from .sgd_driver import (STEP_CHECK_MODES, BatchTrace, Objective, bank_at, ee_grad_sgd_batch,
                         fixed_oracle_sgd_batch, quadratic)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

GAPS_HEADER = ["T", "algorithm", "iteration", "mean_gap", "std_err", "realizations"]
PULLS_HEADER = ["T", "iteration", "oracle", "mean_pulls"]
REGRET_HEADER = ["T", "mean_pseudo_regret", "std_err", "realizations"]
EE_GRAD = "ee-grad"
OPTIMAL = "optimal"
# realizations per work unit; fixed so results never depend on the thread count
BLOCK = 250
INIT_TAG = 0
COMMON_TAG = 1


class ConfigError(ValueError):
    pass


@dataclass
class BankConfig:
    mode: str = "direct"
    sigma_sq: Optional[list] = None
    # cost_fidelity mode: C(theta) = c_min + scale*theta^exponent, D(n) = agg_rate*(n-1)
    budget: Optional[float] = None
    scale: float = 1.0
    exponent: float = 1.0
    c_min: float = 0.0
    agg_rate: float = 0.0
    max_batch: Optional[int] = None
    # optional per-iteration override: one base sigma^2 list per SGD iteration
    per_iteration: Optional[list] = None


@dataclass
class ScalingConfig:
    rule: str = "proportional"
    t_ref: int = 50
    table: dict = field(default_factory=dict)


@dataclass
class AlgorithmConfig:
    alpha: float = 3.0
    beta: Any = "auto"
    beta_margin: float = 1.2
    p_bound: Any = "initial"
    p_margin: float = 2.0
    c_const: float = 1.0
    step_check: str = "warn"
    include_init: bool = True


@dataclass
class RegretConfig:
    trials_t: list = field(default_factory=lambda: [250, 500, 1000, 2000])
    realizations: int = 200
    point: Optional[list] = None
    apply_scaling: bool = False


@dataclass
class ConstantsConfig:
    point: Optional[list] = None


@dataclass
class ExperimentConfig:
    dim: int = 2
    trials_t: list = field(default_factory=lambda: [50])
    iterations_k: int = 5
    step_size: Any = 0.85
    realizations: int = 2000
    base_seed: int = 0
    comparison_arms: bool = True
    output_dir: str = "results"
    seed_policy: str = "independent"
    init_radius: float = 5.0
    objective: dict = field(default_factory=lambda: {"name": "quadratic"})
    bank: BankConfig = field(default_factory=BankConfig)
    sigma_scaling: ScalingConfig = field(default_factory=ScalingConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    regret: RegretConfig = field(default_factory=RegretConfig)
    constants: ConstantsConfig = field(default_factory=ConstantsConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_TABLES = {
    "bank": BankConfig,
    "sigma_scaling": ScalingConfig,
    "algorithm": AlgorithmConfig,
    "regret": RegretConfig,
    "constants": ConstantsConfig,
}


def _known_keys(cls) -> set:
    return set(cls.__dataclass_fields__)


def config_from_dict(raw: dict) -> ExperimentConfig:
    top = dict(raw)
    unknown = set(top) - _known_keys(ExperimentConfig)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, value in top.items():
        if key in _TABLES:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a table")
            bad = set(value) - _known_keys(_TABLES[key])
            if bad:
                raise ConfigError(f"unknown key(s) in [{key}]: "
                                  + ", ".join(f"{key}.{b}" for b in sorted(bad)))
            kwargs[key] = _TABLES[key](**value)
        elif key == "objective":
            if not isinstance(value, dict):
                raise ConfigError("objective: expected a table")
            kwargs[key] = dict(value)
        else:
            kwargs[key] = value
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: file not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


def _require(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate(cfg: ExperimentConfig) -> None:
    """Raise ConfigError naming the first invalid field."""
    _require(_is_int(cfg.dim) and cfg.dim >= 1, "dim", "must be a positive integer")
    _require(isinstance(cfg.trials_t, list) and len(cfg.trials_t) > 0, "trials_t",
             "must be a nonempty list")
    for i, T in enumerate(cfg.trials_t):
        _require(_is_int(T) and T >= 1, f"trials_t[{i}]", "must be a positive integer")
    _require(_is_int(cfg.iterations_k) and cfg.iterations_k >= 1, "iterations_k",
             "must be a positive integer")
    if isinstance(cfg.step_size, list):
        _require(len(cfg.step_size) == cfg.iterations_k, "step_size",
                 f"list must have iterations_k={cfg.iterations_k} entries")
        for i, e in enumerate(cfg.step_size):
            _require(_is_num(e) and e > 0, f"step_size[{i}]", "must be positive")
    else:
        _require(_is_num(cfg.step_size) and cfg.step_size > 0, "step_size", "must be positive")
    _require(_is_int(cfg.realizations) and cfg.realizations >= 1, "realizations", "must be >= 1")
    _require(_is_int(cfg.base_seed) and cfg.base_seed >= 0, "base_seed",
             "must be a nonnegative integer")
    _require(isinstance(cfg.comparison_arms, bool), "comparison_arms", "must be true or false")
    _require(isinstance(cfg.output_dir, str), "output_dir", "must be a string")
    _require(cfg.seed_policy in ("independent", "common"), "seed_policy",
             "must be 'independent' or 'common'")
    _require(_is_num(cfg.init_radius) and cfg.init_radius > 0, "init_radius", "must be positive")

    obj = cfg.objective
    _require(obj.get("name") == "quadratic", "objective.name", "only 'quadratic' is built in")
    bad = set(obj) - {"name", "curvature"}
    _require(not bad, "objective", f"unknown key(s) {sorted(bad)}")
    if "curvature" in obj:
        curv = obj["curvature"]
        _require(isinstance(curv, list) and len(curv) == cfg.dim
                 and all(_is_num(a) and a > 0 for a in curv),
                 "objective.curvature", "must list dim positive numbers")

    b = cfg.bank
    _require(b.mode in ("direct", "cost_fidelity"), "bank.mode",
             "must be 'direct' or 'cost_fidelity'")
    if b.mode == "direct":
        _require(isinstance(b.sigma_sq, list) and len(b.sigma_sq) > 0, "bank.sigma_sq",
                 "must be a nonempty list in direct mode")
        for i, s in enumerate(b.sigma_sq):
            _require(_is_num(s) and s > 0, f"bank.sigma_sq[{i}]", "must be positive")
    else:
        _require(_is_num(b.budget) and b.budget > 0, "bank.budget", "must be positive")
        try:
            build_cost(b)
        except ValueError as exc:
            raise ConfigError(f"bank: {exc}") from exc
    n_oracles = len(base_sigma_sq(cfg))
    if b.per_iteration is not None:
        _require(isinstance(b.per_iteration, list) and len(b.per_iteration) == cfg.iterations_k,
                 "bank.per_iteration", f"must list iterations_k={cfg.iterations_k} banks")
        for k, row in enumerate(b.per_iteration):
            _require(isinstance(row, list) and len(row) == n_oracles
                     and all(_is_num(v) and v > 0 for v in row),
                     f"bank.per_iteration[{k}]", f"must list {n_oracles} positive variances")
        _require(cfg.sigma_scaling.rule != "table", "bank.per_iteration",
                 "cannot be combined with sigma_scaling.rule = 'table'")

    sc = cfg.sigma_scaling
    _require(sc.rule in ("none", "proportional", "table"), "sigma_scaling.rule",
             "must be 'none', 'proportional' or 'table'")
    _require(_is_int(sc.t_ref) and sc.t_ref >= 1, "sigma_scaling.t_ref", "must be a positive integer")
    if sc.rule == "table":
        for T in cfg.trials_t:
            row = sc.table.get(str(T))
            _require(isinstance(row, list) and len(row) == n_oracles
                     and all(_is_num(s) and s > 0 for s in row),
                     f"sigma_scaling.table.{T}", f"must list {n_oracles} positive variances")

    a = cfg.algorithm
    _require(_is_num(a.alpha) and a.alpha > 2, "algorithm.alpha", "must be > 2")
    _require(a.beta == "auto" or (_is_num(a.beta) and a.beta > 0), "algorithm.beta",
             "must be 'auto' or a positive number")
    _require(_is_num(a.beta_margin) and a.beta_margin >= 1, "algorithm.beta_margin", "must be >= 1")
    _require(a.p_bound in ("initial", "per_iterate") or (_is_num(a.p_bound) and a.p_bound > 0),
             "algorithm.p_bound", "must be 'initial', 'per_iterate' or a positive number")
    _require(_is_num(a.p_margin) and a.p_margin > 0, "algorithm.p_margin", "must be positive")
    _require(_is_num(a.c_const) and a.c_const > 0, "algorithm.c_const", "must be positive")
    _require(a.step_check in STEP_CHECK_MODES, "algorithm.step_check",
             f"must be one of {STEP_CHECK_MODES}")
    _require(isinstance(a.include_init, bool), "algorithm.include_init", "must be true or false")
    for T in cfg.trials_t:
        _require(T >= 2 * n_oracles + 1, "trials_t",
                 f"T={T} is below 2N+1={2 * n_oracles + 1} for N={n_oracles} oracles")

    r = cfg.regret
    _require(isinstance(r.trials_t, list) and r.trials_t, "regret.trials_t", "must be a nonempty list")
    for i, T in enumerate(r.trials_t):
        _require(_is_int(T) and T >= 2 * n_oracles + 1, f"regret.trials_t[{i}]",
                 f"must be an integer >= {2 * n_oracles + 1}")
    _require(_is_int(r.realizations) and r.realizations >= 1, "regret.realizations", "must be >= 1")
    _require(isinstance(r.apply_scaling, bool), "regret.apply_scaling", "must be true or false")
    for where, point in (("regret.point", r.point), ("constants.point", cfg.constants.point)):
        if point is not None:
            _require(isinstance(point, list) and len(point) == cfg.dim
                     and all(_is_num(v) for v in point), where, f"must list {cfg.dim} numbers")


# -- model construction -------------------------------------------------------

def build_cost(b: BankConfig) -> CostModel:
    return CostModel.power(b.budget, b.scale, b.exponent, b.c_min, b.agg_rate, b.max_batch)


def build_objective(cfg: ExperimentConfig) -> Objective:
    return quadratic(cfg.dim, cfg.objective.get("curvature"))


def base_sigma_sq(cfg: ExperimentConfig) -> list[float]:
    if cfg.bank.mode == "direct":
        return [float(s) for s in cfg.bank.sigma_sq]
    gradient = build_objective(cfg).gradient
    return list(OracleBank.from_cost(build_cost(cfg.bank), gradient).sigma_sq)


def _proportional(values, cfg: ExperimentConfig, T: int) -> list[float]:
    return [float(v) * T / cfg.sigma_scaling.t_ref for v in values]


def effective_sigma_sq(cfg: ExperimentConfig, T: int, scaled: bool = True) -> list[float]:
    """Per-T variance factors after the configured comparability scaling."""
    base = base_sigma_sq(cfg)
    rule = cfg.sigma_scaling.rule if scaled else "none"
    if rule == "none":
        return base
    if rule == "proportional":
        return _proportional(base, cfg, T)
    return [float(s) for s in cfg.sigma_scaling.table[str(T)]]


def build_bank(cfg: ExperimentConfig, T: int, scaled: bool = True) -> OracleBank:
    return OracleBank.direct(effective_sigma_sq(cfg, T, scaled), build_objective(cfg).gradient)


def build_bank_schedule(cfg: ExperimentConfig, T: int):
    """The bank for every SGD iteration: one bank, or a list under the per-iteration override."""
    bank = build_bank(cfg, T)
    rows = cfg.bank.per_iteration
    if rows is None:
        return bank
    if cfg.sigma_scaling.rule == "proportional":
        rows = [_proportional(row, cfg, T) for row in rows]
    return [bank.with_sigma_sq(row) for row in rows]


def _schedule_max_sigma(banks) -> float:
    banks = banks if isinstance(banks, list) else [banks]
    return max(max(b.sigma_sq) for b in banks)


def beta_for(cfg: ExperimentConfig, sigma_sq) -> float:
    a = cfg.algorithm
    return a.beta_margin * max(sigma_sq) if a.beta == "auto" else float(a.beta)


def params_for(cfg: ExperimentConfig, T: int, sigma_sq, p_bound: float = 1.0) -> EEGradParams:
    """EEGradParams for trial count T; P is a placeholder unless fixed in the config."""
    a = cfg.algorithm
    p = float(a.p_bound) if _is_num(a.p_bound) else p_bound
    return EEGradParams(alpha=float(a.alpha), beta=beta_for(cfg, sigma_sq), p_bound=p,
                        dim=cfg.dim, rounds=T, c_const=float(a.c_const))


def p_bound_at(cfg: ExperimentConfig, w) -> float:
    """P implied by the config at iterate ``w`` (fixed value or margin * S(w))."""
    a = cfg.algorithm
    if _is_num(a.p_bound):
        return float(a.p_bound)
    s = float(np.sum(np.square(build_objective(cfg).gradient(np.asarray(w, dtype=float)))))
    return a.p_margin * s


def etas_for(cfg: ExperimentConfig) -> list[float]:
    if isinstance(cfg.step_size, list):
        return [float(e) for e in cfg.step_size]
    return [float(cfg.step_size)] * cfg.iterations_k


# -- streams ------------------------------------------------------------------

def algorithm_names(cfg: ExperimentConfig, n_oracles: int) -> list[str]:
    names = [EE_GRAD, OPTIMAL]
    if cfg.comparison_arms:
        names += [f"oracle-{n}" for n in range(1, n_oracles + 1)]
    return names


def algorithm_tag(cfg: ExperimentConfig, name: str) -> int:
    if cfg.seed_policy == "common":
        return COMMON_TAG
    if name == EE_GRAD:
        return 1
    if name == OPTIMAL:
        return 2
    return 2 + int(name.split("-")[1])


def realization_rng(base_seed: int, T: int, tag: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([base_seed, T, tag, r])))


def initial_iterates(cfg: ExperimentConfig, T: int, seed: int, indices) -> np.ndarray:
    """Uniform on the sphere of radius ``init_radius``, one per realization."""
    out = np.empty((len(indices), cfg.dim))
    for i, r in enumerate(indices):
        v = realization_rng(seed, T, INIT_TAG, r).standard_normal(cfg.dim)
        out[i] = cfg.init_radius * v / np.linalg.norm(v)
    return out


def noise_source(seed: int, T: int, tag: int, indices, dim: int):
    """Callable k -> (R, T, d) standard normals; must be called for k = 0, 1, ... in order."""
    gens = [realization_rng(seed, T, tag, r) for r in indices]

    def draw(k: int) -> np.ndarray:
        return np.stack([g.standard_normal((T, dim)) for g in gens])

    return draw


# -- running ------------------------------------------------------------------

@dataclass
class AggregateResult:
    """Seed-averaged gaps, pull counts and pseudo-regret, plus the raw traces."""

    gap_rows: list = field(default_factory=list)
    pull_rows: list = field(default_factory=list)
    regret_rows: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def mean_gaps(self, T: int, algorithm: str) -> np.ndarray:
        return self.traces[(T, algorithm)].gaps.mean(axis=0)


def _std_err(x: np.ndarray) -> np.ndarray:
    R = x.shape[0]
    if R < 2:
        return np.full(x.shape[1:], np.nan)
    return x.std(axis=0, ddof=1) / math.sqrt(R)


def _run_blocks(fn, n_items: int, threads: int) -> list:
    blocks = [range(i, min(i + BLOCK, n_items)) for i in range(0, n_items, BLOCK)]
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def _concat(parts: list) -> BatchTrace:
    return BatchTrace(
        gaps=np.concatenate([p.gaps for p in parts]),
        pulls=np.concatenate([p.pulls for p in parts]),
        pseudo_regret=np.concatenate([p.pseudo_regret for p in parts]),
        trace_s=np.concatenate([p.trace_s for p in parts]),
        step_violations=sum(p.step_violations for p in parts),
    )


def simulate(cfg: ExperimentConfig, T: int, algorithm: str, seed: int, threads: int = 1,
             bank: Optional[OracleBank] = None) -> BatchTrace:
    """All realizations of one algorithm at one T."""
    objective = build_objective(cfg)
    bank = bank or build_bank_schedule(cfg, T)
    params = params_for(cfg, T, [_schedule_max_sigma(bank)])
    etas = etas_for(cfg)
    tag = algorithm_tag(cfg, algorithm)
    a = cfg.algorithm

    def block(indices) -> BatchTrace:
        w0 = initial_iterates(cfg, T, seed, indices)
        noise = noise_source(seed, T, tag, indices, cfg.dim)
        if algorithm == EE_GRAD:
            p_margin = a.p_margin if a.p_bound == "per_iterate" else None
            p_bounds = None
            if a.p_bound == "initial":
                p_bounds = a.p_margin * bank_at(bank, 0).covariance_diag(w0).sum(axis=1)
            return ee_grad_sgd_batch(objective, bank, params, etas, w0, noise, p_margin=p_margin,
                                     p_bounds=p_bounds, step_check=a.step_check,
                                     include_init=a.include_init)
        oracle = None if algorithm == OPTIMAL else int(algorithm.split("-")[1])
        check = a.step_check if algorithm == OPTIMAL else "off"
        return fixed_oracle_sgd_batch(objective, bank, params, etas, w0, noise, oracle, check)

    return _concat(_run_blocks(block, cfg.realizations, threads))


def _post_hoc_checks(cfg: ExperimentConfig, T: int, bank, trace: BatchTrace,
                     algorithm: str) -> list[str]:
    notes = []
    a = cfg.algorithm
    top = _schedule_max_sigma(bank)
    if a.beta != "auto" and float(a.beta) < top:
        notes.append(f"T={T}: beta={a.beta} is below max sigma^2={top}")
    if algorithm == EE_GRAD and a.p_bound != "per_iterate":
        if _is_num(a.p_bound):
            bound = np.full(trace.trace_s.shape[0], float(a.p_bound))
        else:
            bound = a.p_margin * trace.trace_s[:, 0]
        over = int(np.sum(trace.trace_s.max(axis=1) > bound))
        if over:
            notes.append(f"T={T}: S(w) exceeded P in {over} realization(s)")
    if trace.step_violations:
        notes.append(f"T={T} {algorithm}: step-size condition failed {trace.step_violations} time(s)")
    return notes


def run_experiment(cfg: ExperimentConfig, threads: int = 1, seed: Optional[int] = None) -> AggregateResult:
    seed = cfg.base_seed if seed is None else seed
    result = AggregateResult()
    for T in cfg.trials_t:
        bank = build_bank_schedule(cfg, T)
        for name in algorithm_names(cfg, bank_at(bank, 0).n_oracles):
            trace = simulate(cfg, T, name, seed, threads, bank)
            result.traces[(T, name)] = trace
            result.warnings += _post_hoc_checks(cfg, T, bank, trace, name)
            means, errs = trace.gaps.mean(axis=0), _std_err(trace.gaps)
            for k in range(trace.gaps.shape[1]):
                result.gap_rows.append((T, name, k + 1, float(means[k]), float(errs[k]),
                                        trace.gaps.shape[0]))
            if name == EE_GRAD:
                pulls = trace.pulls.mean(axis=0)
                for k in range(pulls.shape[0]):
                    for n in range(pulls.shape[1]):
                        result.pull_rows.append((T, k + 1, n + 1, float(pulls[k, n])))
                regret = trace.pseudo_regret.mean(axis=0)
                for k, v in enumerate(regret):
                    result.regret_rows.append((T, k + 1, float(v)))
    for note in result.warnings:
        log.warning(note)
    return result


# -- output -------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def emit_csv(result: AggregateResult, out_dir) -> tuple[Path, Path]:
    """Write gaps.csv and pulls.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gaps_path, pulls_path = out / "gaps.csv", out / "pulls.csv"
    with gaps_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GAPS_HEADER)
        for row in sorted(result.gap_rows, key=lambda r: (r[0], r[1], r[2])):
            writer.writerow([_fmt(v) for v in row])
    with pulls_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PULLS_HEADER)
        for row in sorted(result.pull_rows, key=lambda r: (r[0], r[1], r[2])):
            writer.writerow([_fmt(v) for v in row])
    return gaps_path, pulls_path


def read_gaps_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {"T": int(r["T"]), "algorithm": r["algorithm"], "iteration": int(r["iteration"]),
             "mean_gap": float(r["mean_gap"]), "std_err": float(r["std_err"]),
             "realizations": int(r["realizations"])}
            for r in csv.DictReader(fh)
        ]


def write_summary(result: AggregateResult, cfg: ExperimentConfig, out_dir, seed: int,
                  wall_time: float) -> Path:
    """summary.json: config hash, seed, versions, timing and aggregate rows."""
    path = Path(out_dir) / "summary.json"
    doc = {
        "config_sha256": cfg.digest(),
        "seed": seed,
        "versions": {"eegrad": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "wall_time_s": round(wall_time, 3),
        "gaps": [dict(zip(GAPS_HEADER, row)) for row in sorted(result.gap_rows,
                                                               key=lambda r: (r[0], r[1], r[2]))],
        "pseudo_regret": [{"T": T, "iteration": k, "mean_pseudo_regret": v}
                          for T, k, v in result.regret_rows],
        "warnings": result.warnings,
    }
    path.write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n")
    return path


def write_realizations(result: AggregateResult, out_dir) -> Path:
    """Per-realization gap log (realizations.csv)."""
    path = Path(out_dir) / "realizations.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["T", "algorithm", "realization", "iteration", "gap"])
        for (T, name) in sorted(result.traces):
            gaps = result.traces[(T, name)].gaps
            for r in range(gaps.shape[0]):
                for k in range(gaps.shape[1]):
                    writer.writerow([T, name, r, k + 1, _fmt(float(gaps[r, k]))])
    return path


def run_and_write(cfg: ExperimentConfig, out_dir=None, threads: int = 1,
                  seed: Optional[int] = None, save_realizations: bool = False) -> AggregateResult:
    seed = cfg.base_seed if seed is None else seed
    out_dir = Path(out_dir or cfg.output_dir)
    start = time.perf_counter()
    result = run_experiment(cfg, threads=threads, seed=seed)
    emit_csv(result, out_dir)
    if save_realizations:
        write_realizations(result, out_dir)
    write_summary(result, cfg, out_dir, seed, time.perf_counter() - start)
    return result


# -- calculators ----------------------------------------------------------------

def default_point(cfg: ExperimentConfig) -> np.ndarray:
    return np.ones(cfg.dim)


def constants_table(cfg: ExperimentConfig, point=None) -> list[dict]:
    """C1, C2, Z_T, tau_opt and tau_alg per T at ``point`` (first step size)."""
    w = np.asarray(point if point is not None else (cfg.constants.point or default_point(cfg)),
                   dtype=float)
    objective = build_objective(cfg)
    eta = etas_for(cfg)[0]
    rows = []
    for T in cfg.trials_t:
        bank = build_bank(cfg, T)
        s = bank.trace_s(w)
        if not s > 0:
            raise ValueError("S(w) is zero at the supplied point")
        params = params_for(cfg, T, bank.sigma_sq, p_bound_at(cfg, w))
        gc = gap_constants(bank.sigma_sq, s, params)
        row = {"T": T, "S_w": s, "sigma_star_sq": bank.sigma_star_sq, "C1": gc.c1, "C2": gc.c2,
               "Z_T": gc.z_t, "eta": eta}
        try:
            tau_opt, tau_alg = contraction_factors(eta, objective.strong_convexity,
                                                   objective.lipschitz, bank.sigma_star_sq,
                                                   gc.z_t, T)
            row.update(tau_opt=tau_opt, tau_alg=tau_alg)
        except ValueError as exc:
            row.update(tau_opt=float("nan"), tau_alg=float("nan"), note=str(exc))
        rows.append(row)
    return rows


@dataclass
class RegretPoint:
    T: int
    regret: np.ndarray      # per realization, sum_n Delta_n gamma_T(n) (no S(w) factor)
    pulls: np.ndarray       # (R, N)
    sq_error: np.ndarray    # per realization ||G(w) - grad F(w)||^2

    @property
    def mean(self) -> float:
        return float(self.regret.mean())

    @property
    def std_err(self) -> float:
        R = self.regret.size
        return float(self.regret.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")


def regret_at(cfg: ExperimentConfig, T: int, point, realizations: int, seed: int,
              threads: int = 1, scaled: bool = False, algorithm: str = EE_GRAD) -> RegretPoint:
    """EE-Grad (or a fixed arm) at one fixed iterate, without the SGD outer loop."""
    w = np.asarray(point, dtype=float)
    bank = build_bank(cfg, T, scaled)
    params = params_for(cfg, T, bank.sigma_sq, p_bound_at(cfg, w))
    grad = np.asarray(bank.gradient(w), dtype=float)
    cov = np.asarray(bank.covariance_diag(w), dtype=float)
    tag = algorithm_tag(cfg, algorithm)

    def block(indices):
        R = len(indices)
        z = noise_source(seed, T, tag, indices, cfg.dim)(0)
        g_rep, c_rep = np.tile(grad, (R, 1)), np.tile(cov, (R, 1))
        if algorithm == EE_GRAD:
            g, pulls = run_iteration_batch(bank.sigma_sq, g_rep, c_rep, params, z,
                                           include_init=cfg.algorithm.include_init)
        else:
            n = bank.best_index if algorithm == OPTIMAL else int(algorithm.split("-")[1])
            g = (g_rep[:, None, :] + np.sqrt(bank.sigma_sq[n - 1] * c_rep)[:, None, :] * z).mean(axis=1)
            pulls = np.zeros((R, bank.n_oracles), dtype=np.int64)
            pulls[:, n - 1] = T
        return g, pulls

    parts = _run_blocks(block, realizations, threads)
    g = np.concatenate([p[0] for p in parts])
    pulls = np.concatenate([p[1] for p in parts])
    return RegretPoint(T, pulls @ bank.gaps, pulls, np.sum((g - grad) ** 2, axis=1))


def regret_sweep(cfg: ExperimentConfig, threads: int = 1, seed: Optional[int] = None) -> list[RegretPoint]:
    seed = cfg.base_seed if seed is None else seed
    point = cfg.regret.point or default_point(cfg)
    return [regret_at(cfg, T, point, cfg.regret.realizations, seed, threads, cfg.regret.apply_scaling)
            for T in cfg.regret.trials_t]


def write_regret_csv(points: list[RegretPoint], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "regret.csv"
    n = points[0].pulls.shape[1] if points else 0
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REGRET_HEADER + [f"mean_pulls_{i}" for i in range(1, n + 1)])
        for p in points:
            writer.writerow([p.T, _fmt(p.mean), _fmt(p.std_err), p.regret.size]
                            + [_fmt(float(v)) for v in p.pulls.mean(axis=0)])
    return path
