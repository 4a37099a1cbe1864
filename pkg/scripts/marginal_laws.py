"""Monte-Carlo check of marginal limit laws for a mixed battery under the null."""

import argparse

from jointstat import BatteryConfig, NullModel, Triple, instantiate_test, validate_battery
from jointstat.simulate import Generator, gof_marginals, run_monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2**14)
    ap.add_argument("--M", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    null = NullModel.uniform()
    tests = (("sample_corr", {"k": 1}), ("hamming_weight2", {"r_bits": 2, "N_lb": 2}), ("permutation", {"L_sb": 3}))
    t = Triple(*(instantiate_test(name, params, null) for name, params in tests))
    b = validate_battery(BatteryConfig(null, (t,), (), N=2, h=3, s=4, n=args.n))

    rep = run_monte_carlo(b, Generator.h0(null), args.M, args.seed, workers=args.workers)
    for label, res in gof_marginals(rep, b).items():
        print(f"{label:8s} vs {res.reference:8s}  KS {res.distance:.4f}  p {res.p_value:.4f}")


if __name__ == "__main__":
    main()
