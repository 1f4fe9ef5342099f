"""Finite-sample behaviour of the spike estimators for a single spike.

    python3 scripts/spike_diagnostics.py --p 200 --n 400 --spike 25 --trials 200

Reports the spread of lambda_hat, the sample-eigenvector alignment against its
limit, and the standardized noise-variance statistic with and without the
correction.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from srqda.model import SpikedCovarianceSpec, make_orthonormal_directions, sample_class, symmetric_eigen
from srqda.spikes import (SpikeCounts, compute_a, estimate_class_spectrum, noise_statistic_bias,
                          standardized_noise_statistic)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=200)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--spike", type=float, default=25.0)
    ap.add_argument("--sigma-sq", type=float, default=1.0)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20240715)
    args = ap.parse_args(argv)

    p, n = args.p, args.n
    v = make_orthonormal_directions(p, 1, args.seed)
    spec = SpikedCovarianceSpec(args.sigma_sq, (args.spike,), (), v, np.zeros(p))
    counts = SpikeCounts(1, 0)
    lam, align, corr, raw = [], [], [], []
    for t in range(args.trials):
        eig = symmetric_eigen(np.cov(sample_class(spec, n, args.seed + 1 + t).T))
        sp = estimate_class_spectrum(eig, counts, n)
        lam.append(sp.lambda_hat[0])
        align.append(float(eig.vectors[:, 0] @ v[:, 0]) ** 2)
        corr.append(standardized_noise_statistic(sp.noise.corrected, args.sigma_sq, counts, p, n))
        raw.append(standardized_noise_statistic(sp.noise.raw, args.sigma_sq, counts, p, n))
    lam = np.array(lam)
    print(f"lambda_hat: mean {lam.mean():.3f}  sd {lam.std(ddof=1):.3f}  "
          f"mean|err| {np.mean(np.abs(lam - args.spike)):.3f}")
    print(f"(v'u)^2:    mean {np.mean(align):.4f}  limit {compute_a(args.spike, p / n):.4f}")
    print(f"noise stat: corrected mean {np.mean(corr):+.3f} var {np.var(corr, ddof=1):.3f}; "
          f"raw mean {np.mean(raw):+.3f} (limit {noise_statistic_bias(args.sigma_sq, [args.spike], p, n):+.3f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
