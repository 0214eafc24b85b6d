"""Sweep the concentration constant c for the three-oracle quadratic setup.

For each c this reports
  * the largest step size allowed by 2/(L(1 + Z_T)) at every T in the config,
  * mean pull counts of one EE-Grad procedure at T = 3000,
  * the implied K-step relative excess of EE-Grad's expected final gap over the
    optimal oracle, using E||G - grad F||^2 = E[sum_t sigma_{n_t}^2] S(w) / T^2
    and the exact per-step factor (1 - eta)^2 + eta^2 Z on F(w) = w^T w / 2.

    python scripts/c_sweep.py configs/three_oracle.toml
"""
import argparse
from dataclasses import replace

import numpy as np

from eegrad.core_math import gap_constants, max_step_size
from eegrad.experiment import (build_bank, etas_for, load_config, p_bound_at, params_for,
                               regret_at)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--c", type=float, nargs="+", default=[1, 10, 30, 50, 78, 100, 150, 200, 300, 1000])
    ap.add_argument("--T", type=int, default=3000)
    ap.add_argument("--realizations", type=int, default=1000)
    args = ap.parse_args()

    cfg = load_config(args.config)
    point = np.asarray(cfg.constants.point or np.ones(cfg.dim), dtype=float)
    eta = etas_for(cfg)[0]
    K = cfg.iterations_k
    print(f"eta={eta}  K={K}  point={point.tolist()}")
    print("c\tmax_eta(min over T)\tmean pulls at T\trel. final-gap excess")
    for c in args.c:
        cfg_c = replace(cfg, algorithm=replace(cfg.algorithm, c_const=float(c)))
        limits = []
        for T in cfg_c.trials_t:
            bank = build_bank(cfg_c, T)
            params = params_for(cfg_c, T, bank.sigma_sq, p_bound_at(cfg_c, point))
            z = gap_constants(bank.sigma_sq, bank.trace_s(point), params).z_t
            limits.append(max_step_size(1.0, z))
        rp = regret_at(cfg_c, args.T, point, args.realizations, cfg.base_seed, scaled=True)
        sig = np.asarray(build_bank(cfg_c, args.T).sigma_sq)
        z_ee = float((rp.pulls @ sig).mean()) / args.T**2
        z_opt = sig.min() / args.T
        rho = lambda z: (1 - eta) ** 2 + eta**2 * z
        excess = (rho(z_ee) / rho(z_opt)) ** K - 1
        pulls = ", ".join(f"{v:.1f}" for v in rp.pulls.mean(axis=0))
        print(f"{c:g}\t{min(limits):.4f}\t[{pulls}]\t{excess:.4f}")


if __name__ == "__main__":
    main()
