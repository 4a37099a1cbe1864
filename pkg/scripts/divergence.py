"""Growth of the monobit statistic under a biased-coin alternative."""

import argparse

from jointstat import BatteryConfig, NullModel, Triple, instantiate_test, validate_battery
from jointstat.simulate import Generator, divergence_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=0.75)
    ap.add_argument("--grid", default="400,1600,6400")
    ap.add_argument("--M", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    null = NullModel.bernoulli()
    tests = (("monobit", {}), ("block_frequency", {"N_lb": 1}), ("ones_count", {"L_sb": 1, "classes": [[0, 1]]}))
    t = Triple(*(instantiate_test(name, params, null) for name, params in tests))
    b = validate_battery(BatteryConfig(null, (t,), (), N=1, h=1, s=1, n=400))

    grid = [int(v) for v in args.grid.split(",")]
    res = divergence_probe(b, Generator.bernoulli(args.p), grid, args.M, args.seed)
    for n, med in zip(res.n_grid, res.medians[:, 0]):
        print(f"n={n:6d}  median sum statistic {med:8.3f}")
    print(f"drift per sqrt(n): {res.drift[0]:.4f} (mean shift {(args.p - 0.5) / 0.5:.4f})")
    print(f"ratio last/first: {res.medians[-1, 0] / res.medians[0, 0]:.3f}")


if __name__ == "__main__":
    main()
