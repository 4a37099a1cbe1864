import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jointstat import BatteryConfig, NullModel, Triple, instantiate_test, validate_battery  # noqa: E402


def triple(null, sum_=("monobit", {}), lb=("block_frequency", {"N_lb": 1}), sb=None, **kw):
    """Catalog triple; the default short-block statistic is the trivial single cell."""
    if sb is None:
        sb = ("ones_count", {"L_sb": 1, "classes": [[0, 1]]}) if null.is_finite else (
            "weight_distrib",
            {"L_sb": 1, "classes": [[0, 1]]},
        )
    return Triple(*(instantiate_test(t, dict(p), null, **kw) for t, p in (sum_, lb, sb)))


def battery(null, triples, N=1, h=1, s=None, n=256, quads=()):
    s = h if s is None else s
    return validate_battery(BatteryConfig(null, tuple(triples), tuple(quads), N=N, h=h, s=s, n=n))


@pytest.fixture
def bern():
    return NullModel.bernoulli()


@pytest.fixture
def unif():
    return NullModel.uniform()


@pytest.fixture
def k5_battery(bern):
    """Bernoulli(1/2), h = s = 2, K* = 5: monobit, block frequency, ones count over pairs."""
    t = triple(bern, ("monobit", {}), ("block_frequency", {"N_lb": 2}), ("ones_count", {"L_sb": 2}))
    return battery(bern, [t], N=2, h=2, s=2, n=64)
