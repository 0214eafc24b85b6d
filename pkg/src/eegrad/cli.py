"""Command-line entry point.

    eegrad run <config>        run the Monte Carlo experiment, write CSVs + summary.json
    eegrad validate <config>   schema check only
    eegrad constants <config>  C1, C2, Z_T and contraction factors at an iterate
    eegrad regret <config>     pseudo-regret sweep over T at a fixed iterate

Exit codes: 0 success, 1 config or usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiment import (ConfigError, constants_table, load_config, regret_sweep, run_and_write,
                         write_regret_csv)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _point(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override base_seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads for realizations (default 1)")
    common.add_argument("--output", default=argparse.SUPPRESS, help="override output_dir")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="eegrad", parents=[common],
                     description="EE-Grad experiment harness")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    run = sub.add_parser("run", parents=[common], help="run the configured experiment")
    run.add_argument("config")
    run.add_argument("--save-realizations", action="store_true",
                     help="also write the per-realization gap log")
    val = sub.add_parser("validate", parents=[common], help="check a config file")
    val.add_argument("config")
    const = sub.add_parser("constants", parents=[common],
                           help="print the variance and contraction constants")
    const.add_argument("config")
    const.add_argument("--point", type=_point, default=None,
                       help="iterate as comma-separated coordinates (default: constants.point or all ones)")
    reg = sub.add_parser("regret", parents=[common], help="pseudo-regret sweep over T")
    reg.add_argument("config")
    return parser


def _print_constants(rows: list[dict]) -> None:
    cols = ["T", "S_w", "sigma_star_sq", "C1", "C2", "Z_T", "eta", "tau_opt", "tau_alg"]
    print("\t".join(cols))
    for row in rows:
        print("\t".join(format(row[c], ".6g") if isinstance(row[c], float) else str(row[c])
                        for c in cols))
        if "note" in row:
            print(f"# T={row['T']}: {row['note']}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    seed = getattr(args, "seed", None)
    threads = getattr(args, "threads", 1)
    output = getattr(args, "output", None)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "validate":
            print(f"{args.config}: ok")
        elif args.command == "run":
            out_dir = Path(output or cfg.output_dir)
            result = run_and_write(cfg, out_dir, threads, seed, args.save_realizations)
            print(f"wrote {out_dir / 'gaps.csv'}, {out_dir / 'pulls.csv'}, {out_dir / 'summary.json'}")
            for note in result.warnings:
                print(f"warning: {note}", file=sys.stderr)
        elif args.command == "constants":
            point = args.point
            if point is not None and len(point) != cfg.dim:
                print(f"config error: --point needs {cfg.dim} coordinates", file=sys.stderr)
                return EXIT_CONFIG
            _print_constants(constants_table(cfg, point))
        elif args.command == "regret":
            points = regret_sweep(cfg, threads, seed)
            print("T\tmean_pseudo_regret\tstd_err\tmean_pulls")
            for p in points:
                pulls = ", ".join(f"{v:.1f}" for v in p.pulls.mean(axis=0))
                print(f"{p.T}\t{p.mean:.6g}\t{p.std_err:.3g}\t[{pulls}]")
            if output:
                print(f"wrote {write_regret_csv(points, output)}")
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
