import math

import numpy as np
import pytest

import oracles
from conftest import battery, triple
from jointstat import (
    NullModel,
    QuadSpec,
    Sequence,
    SumSpec,
    eval_battery,
    eval_long_block,
    eval_quadratic,
    eval_short_block,
    eval_sum,
    instantiate_test,
)
from jointstat.catalog import Coordinate, LagProduct
from jointstat.errors import DimensionMismatch, EvaluationError, InvalidFunctionOutput, OutOfRange, SequenceTooShort
from jointstat.model import SampleSpace


@pytest.fixture
def mono(bern):
    return instantiate_test("monobit", {}, bern)


class TestSequence:
    def test_storage_and_readonly(self):
        s = Sequence(SampleSpace.finite(2), [1, 0, 1])
        assert s.n == 3 and s.data.dtype == np.uint8
        with pytest.raises(ValueError):
            s.data[0] = 0

    def test_out_of_space(self):
        with pytest.raises(OutOfRange):
            Sequence(SampleSpace.finite(2), [0, 2])
        with pytest.raises(SequenceTooShort):
            Sequence(SampleSpace.finite(2), [])

    def test_equality(self):
        a = Sequence(SampleSpace.finite(2), [1, 0])
        assert a == Sequence(SampleSpace.finite(2), np.array([1, 0]))
        assert a != Sequence(SampleSpace.finite(2), [0, 1])


class TestSum:
    def test_all_ones(self, mono):
        assert eval_sum(mono, np.array([1, 1, 1, 1])) == 2.0

    def test_sample_corr_constant(self, unif):
        spec = instantiate_test("sample_corr", {"k": 1}, unif)
        seq = Sequence(SampleSpace.unit_interval(), np.ones(14))
        assert math.isclose(eval_sum(spec, seq), 9.0, rel_tol=1e-14)

    def test_centered(self, mono):
        assert eval_sum(mono, np.array([1, 0, 0, 1, 1, 0])) == 0.0

    def test_too_short(self, unif):
        spec = instantiate_test("sample_corr", {"k": 3}, unif)
        with pytest.raises(SequenceTooShort):
            eval_sum(spec, np.array([0.1, 0.2]))

    def test_matches_loop_oracle(self, unif):
        rng = np.random.default_rng(4)
        x = rng.random(500)
        spec = instantiate_test("sample_corr", {"k": 2}, unif)
        ref = oracles.t_sum(lambda w: w[0] * w[-1], 3, spec.mean, spec.sigma, list(x))
        assert math.isclose(eval_sum(spec, x), ref, rel_tol=1e-10)

    def test_chunking_is_invisible(self, unif):
        x = np.random.default_rng(1).random(10_001)
        spec = instantiate_test("sample_corr", {"k": 2}, unif)
        assert math.isclose(eval_sum(spec, x, chunk=97), eval_sum(spec, x), rel_tol=1e-13)

    def test_nan_from_plugin(self):
        spec = SumSpec(lambda w: np.full(w.shape[0], np.nan), 1, 0.0, 1.0)
        with pytest.raises(InvalidFunctionOutput):
            eval_sum(spec, np.array([0, 1]))


class TestLongBlock:
    @pytest.fixture
    def spec(self, bern):
        return instantiate_test("block_frequency", {"N_lb": 2}, bern)

    def test_arithmetic(self, spec):
        assert eval_long_block(spec, np.array([1, 1, 1, 1, 0, 0, 0, 0])) == 8.0

    def test_balanced(self, spec):
        assert eval_long_block(spec, np.array([1, 0, 1, 0, 0, 1, 0, 1])) == 0.0

    def test_discard_tail(self, spec):
        x = np.array([1, 1, 1, 1, 0, 0, 0, 0])
        assert eval_long_block(spec, np.r_[x, 1]) == eval_long_block(spec, x)

    def test_matches_loop_oracle(self, bern):
        x = np.random.default_rng(2).integers(0, 2, 999)
        spec = instantiate_test("block_frequency", {"N_lb": 7}, bern)
        ref = oracles.t_lb(lambda w: w[0], 1, 7, 0.5, 0.5, list(x))
        assert math.isclose(eval_long_block(spec, x), ref, rel_tol=1e-12)

    def test_too_short(self, bern):
        spec = instantiate_test("block_frequency", {"N_lb": 5}, bern)
        with pytest.raises(SequenceTooShort):
            eval_long_block(spec, np.array([1, 0, 1]))


class TestShortBlock:
    @pytest.fixture
    def spec(self, bern):
        return instantiate_test("ones_count", {"L_sb": 2}, bern)

    def test_exact_expectation(self, spec):
        assert eval_short_block(spec, np.array([0, 0, 0, 1, 1, 0, 1, 1])) == 0.0

    def test_all_zeros(self, spec):
        assert eval_short_block(spec, np.zeros(8, dtype=int)) == 12.0

    def test_permutation_one_hot(self, unif):
        spec = instantiate_test("permutation", {"L_sb": 3}, unif)
        n_sb = 50
        x = np.tile([0.1, 0.2, 0.3], n_sb)
        assert math.isclose(eval_short_block(spec, x), 5 * n_sb, rel_tol=1e-12)

    def test_permutation_classes_match_oracle(self, unif):
        spec = instantiate_test("permutation", {"L_sb": 4}, unif)
        blocks = np.random.default_rng(3).random((200, 4))
        got = spec.classifier(blocks)
        assert got.tolist() == [oracles.permutation_class(tuple(b)) for b in blocks]

    def test_discard_tail(self, spec):
        x = np.array([0, 0, 0, 1, 1, 0, 1, 1])
        assert eval_short_block(spec, np.r_[x, 1]) == eval_short_block(spec, x)

    def test_matches_loop_oracle(self, bern):
        spec = instantiate_test("ones_count", {"L_sb": 5, "classes": [[0, 1], [2], [3], [4, 5]]}, bern)
        x = np.random.default_rng(8).integers(0, 2, 1003)
        ref = oracles.t_sb(lambda b: {0: 0, 1: 0, 2: 1, 3: 2, 4: 3, 5: 3}[sum(b)], 5, spec.cells, list(x))
        assert math.isclose(eval_short_block(spec, x), ref, rel_tol=1e-12)


class TestQuadratic:
    def test_single_square(self):
        assert eval_quadratic(QuadSpec(((1.0,),), (0,)), [3.0]) == 9.0

    def test_identity(self):
        assert eval_quadratic(QuadSpec(((1, 0), (0, 1)), (0, 1)), [3, 4]) == 25.0

    def test_kernel(self):
        assert eval_quadratic(QuadSpec(((1, -1),), (0, 1)), [2.5, 2.5]) == 0.0

    def test_dimension(self):
        with pytest.raises(DimensionMismatch):
            eval_quadratic(QuadSpec(((1, -1),), (0, 1)), [1.0])
        with pytest.raises(DimensionMismatch):
            QuadSpec(((1, -1), (1,)), (0, 1))


class TestBattery:
    def test_shape_and_quad(self, bern):
        t = triple(bern)
        b = battery(bern, [t], n=64, quads=[QuadSpec(((1.0,),), (0,))])
        x = np.random.default_rng(0).integers(0, 2, 64)
        v = eval_battery(b, x)
        assert len(v) == 4 and v.labels[-1] == "quad[0]"
        assert v[3] == v[0] ** 2
        assert v["sum[0]"] == v[0]

    def test_identical_triples(self, bern):
        t = triple(bern, ("monobit", {}), ("block_frequency", {"N_lb": 2}), ("ones_count", {"L_sb": 2}))
        b = battery(bern, [t, t], N=2, h=2, n=64)
        v = eval_battery(b, np.random.default_rng(5).integers(0, 2, 64)).values
        assert v[:3] == v[3:6]

    def test_length_mismatch(self, bern):
        b = battery(bern, [triple(bern)], n=64)
        with pytest.raises(SequenceTooShort):
            eval_battery(b, np.zeros(63, dtype=int))

    def test_member_error_is_labelled(self, bern):
        t = triple(bern)
        bad = t.__class__(SumSpec(lambda w: np.full(w.shape[0], np.inf), 1, 0.0, 1.0), t.lb, t.sb)
        b = battery(bern, [bad], n=8)
        with pytest.raises(EvaluationError) as exc:
            eval_battery(b, np.zeros(8, dtype=int))
        assert exc.value.label == "sum[0]"

    def test_deterministic(self, bern):
        t = triple(bern, ("window_sum", {"m": 3}))
        b = battery(bern, [t], N=1, h=1, s=3, n=500)
        x = np.random.default_rng(7).integers(0, 2, 500)
        assert eval_battery(b, x) == eval_battery(b, x.copy())


def test_sum_spec_on_unit_interval_coordinate():
    spec = SumSpec(Coordinate(), 1, 0.5, math.sqrt(1 / 12))
    x = np.array([0.5, 0.5])
    assert eval_sum(spec, x) == 0.0
    assert LagProduct()(np.array([[0.5, 0.2, 2.0]]))[0] == 1.0
    assert NullModel.uniform().is_finite is False
