"""Run the standard desk-scale experiments through the CLI into one results folder.

    python3 scripts/run_experiments.py --out results [--quick] [--only scan,iterate]
"""

import argparse
import sys
import time
from pathlib import Path

from fup_lab.cli import main as fup_lab


def experiments(out: Path, quick: bool) -> dict[str, list[str]]:
    paths = "100000" if quick else "1000000"
    kmax = "6" if quick else "8"
    depth = "7" if quick else "10"
    return {
        "scan": ["fup-scan", "--cantor", "3:0,2", "--kmin", "2", "--kmax", kmax, "--out", f"{out}/scan/scan.csv"],
        "scan-dense": ["fup-scan", "--cantor", "5:0,2,4", "--kmin", "2", "--kmax", "5", "--out", f"{out}/scan-dense/scan.csv"],
        "phase": ["phase-norm", "--phase", "linear", "--set", "3:0,2:5", "--out", f"{out}/phase/linear.json"],
        "phase-quartic": ["phase-norm", "--phase", "quartic", "--set", "3:0,2:5", "--out", f"{out}/phase/quartic.json"],
        "hyperbolic": ["hyperbolic-norm", "--cantor", "3:0,2", "--kmin", "3", "--kmax", "6" if quick else "7",
                       "--out", f"{out}/hyperbolic/norms.csv"],
        "strip": ["harmonic", "check", "--domain", "strip", "--paths", paths, "--F", "", "--out", f"{out}/harmonic/strip.json"],
        "slit-plane": ["harmonic", "check", "--domain", "slit-plane", "--slit=0,1", "--t=2", "--paths", paths, "--F", "",
                       "--out", f"{out}/harmonic/slit_plane.json"],
        "slit-strip": ["harmonic", "check", "--domain", "slit-strip", "--paths", paths,
                       "--F", "one;exp:1;polyexp:1:0.5:0.3+0.1j", "--out", f"{out}/harmonic/slit_strip.json"],
        "weight": ["weight", "--y", "3:0,2:7", "--scale", "2187", "--cr", "2.399",
                   "--csv", f"{out}/weight/grid.csv", "--out", f"{out}/weight/weight.json"],
        "uc": ["uc-constant", "--y", "3:0,2:5", "--out", f"{out}/uc/uc.json"],
        "iterate": ["iterate", "--x", f"3:0,2:{depth}", "--L", "3", "--T", "3", "--m", "4", "--out", f"{out}/iterate/steps.csv"],
    }


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--quick", action="store_true", help="smaller depths and path counts")
    ap.add_argument("--only", help="comma-separated experiment names")
    args = ap.parse_args(argv)
    todo = experiments(Path(args.out), args.quick)
    if args.only:
        names = args.only.split(",")
        unknown = set(names) - set(todo)
        if unknown:
            ap.error(f"unknown experiments {sorted(unknown)}; choose from {sorted(todo)}")
        todo = {k: todo[k] for k in names}
    worst = 0
    for name, cmd in todo.items():
        t0 = time.perf_counter()
        rc = fup_lab(cmd)
        print(f"[{name}] exit {rc} in {time.perf_counter() - t0:.1f}s")
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(run())
