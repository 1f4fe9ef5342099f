"""Accuracy sweeps over mean separation and class-1 noise level.

    python3 scripts/reproduce_tables.py --sweep mean --reps 50 --out mean.csv
    python3 scripts/reproduce_tables.py --sweep noise --sizes 100 600

Prints each table next to the published reference accuracies where they exist.
"""

from __future__ import annotations

import argparse
import sys

from srqda.experiments import SimulationConfig, run_simulation

SWEEPS = {
    "mean": [{"mean_scale": a, "sigma1_sq": 1.5} for a in (0.5, 0.8, 2.0, 2.5)],
    "noise": [{"mean_scale": 0.5, "sigma1_sq": s} for s in (1.2, 1.5, 2.0, 4.0)],
}

# (mean_scale, sigma1_sq, n) -> (qda, rqda, srqda)
REFERENCE = {
    (0.5, 1.5, 100): (0.5000, 0.5609, 0.7428), (0.5, 1.5, 600): (0.5739, 0.6702, 0.7551),
    (0.8, 1.5, 100): (0.5000, 0.5743, 0.7306), (2.0, 1.5, 100): (0.5000, 0.6628, 0.7781),
    (2.5, 1.5, 100): (0.5000, 0.7103, 0.8016), (0.5, 1.2, 100): (0.5000, 0.5496, 0.5732),
    (0.5, 2.0, 100): (0.5000, 0.6223, 0.8585), (0.5, 4.0, 100): (0.5000, 0.8480, 0.9518),
}
METHODS = ("qda", "rqda", "srqda")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sweep", choices=sorted(SWEEPS), default="mean")
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 300, 400, 500, 600])
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--isotropic", action="store_true",
                    help="add the isotropic variance term to the SR-QDA objective")
    ap.add_argument("--out", help="write the combined CSV here")
    args = ap.parse_args(argv)

    csv_parts = []
    for overrides in SWEEPS[args.sweep]:
        cfg = SimulationConfig(sample_sizes=tuple(args.sizes), replications=args.reps,
                               methods=METHODS, isotropic_variance=args.isotropic, **overrides)
        table = run_simulation(cfg, threads=args.threads)
        csv = table.to_csv().splitlines()
        csv_parts.extend(csv if not csv_parts else csv[1:])
        print(f"\n{cfg.label}")
        print(f"{'n':>5} " + " ".join(f"{m:>15}" for m in METHODS))
        for n in args.sizes:
            ref = REFERENCE.get((cfg.mean_scale, cfg.sigma1_sq, n))
            cells = []
            for k, m in enumerate(METHODS):
                got = table.get(cfg.label, m, n).mean_accuracy
                cells.append(f"{got:.4f}" + (f" ({ref[k]:.4f})" if ref else " " * 9))
            print(f"{n:>5} " + " ".join(f"{c:>15}" for c in cells))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(csv_parts) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
