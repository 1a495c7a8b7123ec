"""Plot CSV output of ``fup-lab``: norm scans, hyperbolic scans, iteration steps, weight grids.

    python3 scripts/plot_csv.py results/scan/scan.csv [more.csv ...] --out fig.png
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {k: [] for k in rows[0]} if rows else {}
    for r in rows:
        for k, v in r.items():
            cols[k].append(float(v) if v not in ("", None) else float("nan"))
    return cols


def plot_one(ax, path):
    c = read(path)
    label = Path(path).parent.name or Path(path).stem
    if {"N", "norm"} <= set(c):
        ax.loglog(c["N"], c["norm"], "o-", label=label)
        ax.set_xlabel("N")
        ax.set_ylabel("restricted norm")
    elif {"h", "norm"} <= set(c):
        ax.loglog([1 / h for h in c["h"]], c["norm"], "s-", label=label)
        ax.set_xlabel("1/h")
        ax.set_ylabel("operator norm")
    elif {"m", "step_norm"} <= set(c):
        ax.semilogy(c["m"], c["step_norm"], "o-", label=f"{label}: step norm")
        ax.semilogy(c["m"], c["bound"], "--", label=f"{label}: chain bound")
        ax.set_xlabel("step m")
    elif {"xi", "log_omega"} <= set(c):
        ax.plot(c["xi"], c["log_omega"], lw=0.6, label=label)
        ax.set_xlabel("xi")
        ax.set_ylabel("log omega")
    else:
        raise SystemExit(f"{path}: unrecognised columns {sorted(c)}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv", nargs="+")
    ap.add_argument("--out", default="plot.png")
    args = ap.parse_args(argv)
    fig, ax = plt.subplots(figsize=(6, 4))
    for p in args.csv:
        plot_one(ax, p)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
