"""Reference CDFs and distribution distances used by the Monte-Carlo checks."""

from __future__ import annotations

import math

import numpy as np
from scipy import special, stats
from scipy.spatial.distance import cdist


def normal_cdf(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * special.erfc(-x / math.sqrt(2.0))


def chi2_cdf(x, df: int):
    """Regularized lower incomplete gamma P(df/2, x/2); df = 0 is the point mass at 0."""
    x = np.asarray(x, dtype=float)
    if df == 0:
        return (x >= 0).astype(float)
    return np.where(x > 0, special.gammainc(df / 2.0, np.maximum(x, 0.0) / 2.0), 0.0)


def chi2_sf(x, df: int):
    x = np.asarray(x, dtype=float)
    if df == 0:
        return (x < 0).astype(float)
    return np.where(x > 0, special.gammaincc(df / 2.0, np.maximum(x, 0.0) / 2.0), 1.0)


def ks_1samp(sample, cdf) -> tuple[float, float]:
    """Kolmogorov-Smirnov distance and asymptotic p-value against a continuous CDF."""
    res = stats.kstest(np.asarray(sample, dtype=float), cdf, method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_2samp(a, b) -> tuple[float, float]:
    res = stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float), method="asymp")
    return float(res.statistic), float(res.pvalue)


def sup_distance(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| between two empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def _thin(x: np.ndarray, limit: int) -> np.ndarray:
    if x.shape[0] <= limit:
        return x
    return x[np.linspace(0, x.shape[0] - 1, limit).round().astype(int)]


def energy_distance(x, y, limit: int = 2000) -> float:
    """Energy distance between two vector samples after joint standardization.

    Each sample is thinned deterministically to at most ``limit`` rows.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    pooled = np.vstack([x, y])
    scale = pooled.std(axis=0)
    scale[scale == 0] = 1.0
    center = pooled.mean(axis=0)
    x = _thin((x - center) / scale, limit)
    y = _thin((y - center) / scale, limit)
    return float(2 * cdist(x, y).mean() - cdist(x, x).mean() - cdist(y, y).mean())
