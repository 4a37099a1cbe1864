import math

import numpy as np
import pytest

import oracles
from conftest import battery, triple
from jointstat import NullModel
from jointstat.errors import BadParams, DimensionMismatch, EvaluationError, TooFewReplicas
from jointstat.gof import chi2_cdf, chi2_sf, ks_1samp, normal_cdf, sup_distance
from jointstat.joint import build_layout, compute_G, estimate_phi, sample_limit
from jointstat.simulate import (
    Generator,
    compare_joint,
    convergence_rate,
    divergence_probe,
    generate,
    gof_marginals,
    run_monte_carlo,
)


@pytest.fixture
def mono(bern):
    return battery(bern, [triple(bern)], N=1, h=1, n=2**14)


def _limit(b, M, seed):
    lay = build_layout(b)
    g = compute_G(estimate_phi(lay, b), b.N, b.h)
    return g, sample_limit(g, lay, b, M, seed=seed)


class TestGenerate:
    def test_bernoulli_one(self):
        assert generate(Generator.bernoulli(1.0), 5, 0).data.tolist() == [1] * 5

    def test_h0_lln(self, bern):
        n = 10**5
        x = generate(Generator.h0(bern), n, 1).data
        assert abs(x.mean() - 0.5) < 5 / (2 * math.sqrt(n))

    def test_markov_half_is_fair(self):
        n = 200_000
        x = generate(Generator.markov_binary(((0.5, 0.5), (0.5, 0.5))), n, 2).data.astype(int)
        pairs = np.bincount(2 * x[:-1] + x[1:], minlength=4) / (n - 1)
        # overlapping pairs are 1-dependent: variance p(1-p)(1 + 2 rho) with rho bounded by 1/3 here
        se = math.sqrt(0.25 * 0.75 * 3 / (n - 1))
        assert np.all(np.abs(pairs - 0.25) < 5 * se)

    def test_markov_sticky(self):
        x = generate(Generator.markov_binary(((1.0, 0.0), (0.0, 1.0)), (0.0, 1.0)), 50, 0).data
        assert x.tolist() == [1] * 50

    def test_deterministic(self, unif):
        g = Generator.uniform01()
        assert generate(g, 100, 7) == generate(g, 100, 7)
        assert generate(g, 100, 7) != generate(g, 100, 8)

    def test_params(self):
        with pytest.raises(BadParams):
            Generator.bernoulli(1.5)
        with pytest.raises(BadParams):
            Generator.markov_binary(((0.5, 0.6), (0.5, 0.5)))
        with pytest.raises(BadParams):
            generate(Generator.bernoulli(0.5), 0, 0)


class TestMonteCarlo:
    def test_single_replica(self, mono):
        rep = run_monte_carlo(mono, Generator.h0(mono.null), 1, 0)
        assert rep.values.shape == (1, 3)

    def test_deterministic(self, k5_battery):
        gen = Generator.h0(k5_battery.null)
        a = run_monte_carlo(k5_battery, gen, 30, 5)
        assert a == run_monte_carlo(k5_battery, gen, 30, 5)
        assert a != run_monte_carlo(k5_battery, gen, 30, 6)

    def test_workers_and_chunks(self, k5_battery):
        gen = Generator.h0(k5_battery.null)
        a = run_monte_carlo(k5_battery, gen, 40, 5, collect_blocks=True)
        b = run_monte_carlo(k5_battery, gen, 40, 5, workers=2, chunk=7, collect_blocks=True)
        assert a == b and np.array_equal(a.block_totals, b.block_totals)

    def test_h0_mean(self, mono):
        rep = run_monte_carlo(mono, Generator.h0(mono.null), 2000, 0)
        assert abs(rep.column("sum[0]").mean()) < 4 / math.sqrt(2000)

    def test_error_carries_replica(self, bern):
        from jointstat import SumSpec

        t = triple(bern)
        bad = t.__class__(SumSpec(lambda w: np.where(w[:, 0] == 1, np.nan, 0.0), 1, 0.5, 0.5), t.lb, t.sb)
        b = battery(bern, [bad], n=64)
        with pytest.raises(EvaluationError) as exc:
            run_monte_carlo(b, Generator.h0(bern), 3, 0)
        assert exc.value.replica == 0 and exc.value.label == "sum[0]"


class TestGof:
    def test_cdfs(self):
        assert math.isclose(normal_cdf(1.959963984540054), 0.975, rel_tol=1e-12)
        assert math.isclose(chi2_cdf(2.0, 2), 1 - math.exp(-1), rel_tol=1e-12)
        assert math.isclose(chi2_sf(3.0, 2), math.exp(-1.5), rel_tol=1e-12)
        assert chi2_cdf(0.0, 0) == 1.0

    def test_normal_draws_pass(self):
        x = np.random.default_rng(0).standard_normal(5000)
        assert ks_1samp(x, normal_cdf)[1] > 0.001

    def test_short_block_law(self, bern):
        t = triple(bern, sb=("ones_count", {"L_sb": 2}))
        b = battery(bern, [t], N=1, h=2, n=2**14)
        rep = run_monte_carlo(b, Generator.h0(bern), 400, 3)
        res = gof_marginals(rep, b)
        assert res["sb[0]"].reference == "chi2(2)" and res["sb[0]"].p_value > 0.001

    def test_wrong_df_is_rejected(self, bern):
        t = triple(bern, lb=("block_frequency", {"N_lb": 2}))
        b = battery(bern, [t], N=2, h=1, n=1024)
        rep = run_monte_carlo(b, Generator.h0(bern), 5000, 4)
        _, p = ks_1samp(rep.column("lb[0]"), lambda x: chi2_cdf(x, 5))
        assert p < 0.001

    def test_point_mass_and_quads(self, bern):
        from jointstat import QuadSpec

        b = battery(bern, [triple(bern)], n=256, quads=[QuadSpec(((1.0,),), (0,))])
        rep = run_monte_carlo(b, Generator.h0(bern), 200, 0)
        res = gof_marginals(rep, b)
        assert res["sb[0]"].p_value == 1.0 and "quad[0]" not in res
        _, lim = _limit(b, 2000, 1)
        assert 0 <= gof_marginals(rep, b, lim)["quad[0]"].p_value <= 1

    def test_too_few(self, mono):
        rep = run_monte_carlo(mono.with_n(64), Generator.h0(mono.null), 99, 0)
        with pytest.raises(TooFewReplicas):
            gof_marginals(rep, mono)


class TestCompareJoint:
    def test_self_comparison(self, k5_battery):
        g, lim = _limit(k5_battery, 500, 2)
        from jointstat.simulate import McReport

        rep = McReport("x", 500, lim.labels, lim.draws, 0, Generator.h0(k5_battery.null), 64)
        cmp = compare_joint(rep, lim)
        assert all(d == 0.0 for d, _ in cmp.ks.values())
        assert cmp.energy == pytest.approx(0.0, abs=1e-12)

    def test_sum_block_variance(self, bern):
        b = battery(bern, [triple(bern)], N=4, h=1, n=1024)
        g, lim = _limit(b, 1000, 3)
        rep = run_monte_carlo(b, Generator.h0(bern), 2000, 9, collect_blocks=True)
        cmp = compare_joint(rep, lim, g)
        i = build_layout(b).blocks[0].sum
        assert g.N * g.matrix[i, i] == pytest.approx(1.0, rel=1e-14)
        assert abs(cmp.cov_diff[i, i]) < 5 * cmp.cov_se[i, i]

    def test_zero_block_pair_uncorrelated(self, unif):
        ts = [triple(unif, ("monobit", {})), triple(unif, ("centered_square", {}))]
        b = battery(unif, ts, N=2, h=2, n=2048)
        rep = run_monte_carlo(b, Generator.h0(unif), 1000, 1)
        rho = np.corrcoef(rep.column("sum[0]"), rep.column("sum[1]"))[0, 1]
        assert abs(rho) < 5 / math.sqrt(1000)

    def test_mismatch(self, bern, mono):
        t = triple(bern)
        _, lim = _limit(battery(bern, [t, t], n=16), 10, 0)
        rep = run_monte_carlo(mono.with_n(16), Generator.h0(mono.null), 2, 0)
        with pytest.raises(DimensionMismatch):
            compare_joint(rep, lim)


class TestDivergence:
    def test_drift(self, mono):
        res = divergence_probe(mono, Generator.bernoulli(0.75), [100, 400, 1600], 400, 1)
        assert res.drift[0] * 20 == pytest.approx(10, abs=0.5)
        assert res.increasing["sum[0]"]
        assert res.c_sum[0] == pytest.approx(0.5, abs=0.05)

    def test_h0_medians_bounded(self, mono):
        res = divergence_probe(mono, Generator.h0(mono.null), [400, 1600, 6400], 2000, 2)
        assert np.all(np.abs(res.medians[:, 0]) < 0.1)

    def test_short_block_median_increasing(self, bern):
        t = triple(bern, sb=("ones_count", {"L_sb": 2}))
        b = battery(bern, [t], N=1, h=2)
        res = divergence_probe(b, Generator.bernoulli(0.75), [200, 800, 3200], 300, 3)
        assert res.increasing["sb[0]"] and res.c_sb[0] > 0

    def test_grid(self, mono):
        with pytest.raises(BadParams):
            divergence_probe(mono, Generator.bernoulli(0.75), [100, 50, 400], 10)


@pytest.fixture(scope="module")
def rate():
    null = NullModel.bernoulli()
    b = battery(null, [triple(null)], N=1, h=1, n=2**8)
    _, lim = _limit(b, 20_000, 11)
    return convergence_rate(b, [2**8, 2**10, 2**12, 2**14], 4000, 12, limit=lim)


class TestConvergence:
    def test_self_distance(self):
        x = np.random.default_rng(0).standard_normal(100)
        assert sup_distance(x, x) == 0.0

    def test_exact_binomial_rate(self):
        grid = [2**8, 2**10, 2**12, 2**14]
        d = [oracles.binomial_normal_sup(n) for n in grid]
        slope = np.polyfit(np.log(grid), np.log(d), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.01)

    def test_monobit_slope(self, rate):
        assert -0.9 <= rate.slopes["sum[0]"] <= -0.25

    def test_distances_nonincreasing(self, rate):
        d = rate.distances[:, 0]
        # standard deviation of a two-sample sup distance: about 0.26 sqrt(1/M + 1/M_lim)
        se = 0.26 * math.sqrt(1 / 4000 + 1 / 20_000)
        assert np.all(np.diff(d) <= 2 * math.sqrt(2) * se)

    def test_too_few(self, mono):
        _, lim = _limit(mono, 10, 0)
        with pytest.raises(TooFewReplicas):
            convergence_rate(mono, [64, 128, 256], 50, limit=lim)
