"""Run the three-oracle quadratic experiment and print the final-gap table.

    python scripts/reproduce_gaps.py [configs/three_oracle.toml] [--threads 4] [--output results/three_oracle]
"""
import argparse

from eegrad.experiment import EE_GRAD, OPTIMAL, load_config, run_and_write


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config", nargs="?", default="configs/three_oracle.toml")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--output", default=None)
    args = ap.parse_args()

    cfg = load_config(args.config)
    result = run_and_write(cfg, args.output, threads=args.threads)
    names = [EE_GRAD, OPTIMAL] + sorted({n for _, n in result.traces} - {EE_GRAD, OPTIMAL})
    print("T\t" + "\t".join(names) + "\trel. excess")
    for T in cfg.trials_t:
        finals = [result.mean_gaps(T, n)[-1] for n in names]
        print(f"{T}\t" + "\t".join(f"{v:.5f}" for v in finals) + f"\t{finals[0] / finals[1] - 1:+.1%}")
    for note in result.warnings:
        print("warning:", note)


if __name__ == "__main__":
    main()
