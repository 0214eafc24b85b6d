"""Plot mean gap against iteration, one panel per T, from a gaps.csv file.

Needs matplotlib, which is not a package dependency:

    python scripts/plot_gaps.py results/three_oracle/gaps.csv --out gaps.png
"""
import argparse
from collections import defaultdict

from eegrad.experiment import read_gaps_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("gaps_csv")
    ap.add_argument("--out", default="gaps.png")
    args = ap.parse_args()

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = defaultdict(lambda: defaultdict(list))
    for row in read_gaps_csv(args.gaps_csv):
        series[row["T"]][row["algorithm"]].append((row["iteration"], row["mean_gap"]))
    Ts = sorted(series)
    fig, axes = plt.subplots(1, len(Ts), figsize=(4 * len(Ts), 3.2), squeeze=False)
    for ax, T in zip(axes[0], Ts):
        for name, pts in sorted(series[T].items()):
            k, gap = zip(*sorted(pts))
            style = "-o" if name == "ee-grad" else "--"
            ax.semilogy(k, gap, style, label=name, linewidth=2 if name == "ee-grad" else 1)
        ax.set_title(f"T = {T}")
        ax.set_xlabel("iteration k")
    axes[0][0].set_ylabel("mean gap")
    axes[0][-1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
