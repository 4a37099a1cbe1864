"""Empirical convergence rate of the monobit statistic versus the exact lattice distance.

The exact sup distance between the standardized binomial and the normal law decays
like n^(-1/2).  The Monte-Carlo estimate flattens once it reaches the sampling noise
of the two-sample distance, roughly 0.9 / sqrt(M).
"""

import argparse
import math

import numpy as np
from scipy import stats

from jointstat import BatteryConfig, NullModel, Triple, instantiate_test, validate_battery
from jointstat.joint import build_layout, compute_G, estimate_phi, sample_limit
from jointstat.simulate import convergence_rate


def exact_distance(n: int) -> float:
    k = np.arange(n + 1)
    z = (k - n / 2) / math.sqrt(n / 4)
    cdf = stats.binom.cdf(k, n, 0.5)
    below = np.r_[0.0, cdf[:-1]]
    phi = stats.norm.cdf(z)
    return float(max(np.abs(cdf - phi).max(), np.abs(below - phi).max()))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", default="256,1024,4096,16384")
    ap.add_argument("--M", type=int, default=4000)
    ap.add_argument("--M-lim", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    null = NullModel.bernoulli()
    tests = (("monobit", {}), ("block_frequency", {"N_lb": 1}), ("ones_count", {"L_sb": 1, "classes": [[0, 1]]}))
    t = Triple(*(instantiate_test(name, params, null) for name, params in tests))
    grid = [int(v) for v in args.grid.split(",")]
    b = validate_battery(BatteryConfig(null, (t,), (), N=1, h=1, s=1, n=grid[0]))
    lay = build_layout(b)
    g = compute_G(estimate_phi(lay, b), 1, 1)
    lim = sample_limit(g, lay, b, args.M_lim, args.seed + 1)
    res = convergence_rate(b, grid, args.M, args.seed, limit=lim)

    exact = [exact_distance(n) for n in grid]
    for n, d, e in zip(grid, res.distances[:, 0], exact):
        print(f"n={n:6d}  monte carlo {d:.4f}  exact {e:.4f}")
    print(f"fitted slope, monte carlo: {res.slopes['sum[0]']:.3f}")
    print(f"fitted slope, exact:       {np.polyfit(np.log(grid), np.log(exact), 1)[0]:.3f}")
    print(f"noise floor near {0.9 * math.sqrt(1 / args.M + 1 / args.M_lim):.4f}")


if __name__ == "__main__":
    main()
