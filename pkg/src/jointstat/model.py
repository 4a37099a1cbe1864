"""Sample spaces, null models, statistic specifications and battery validation.

Plug-in functions follow a vectorized pure-function contract: a window
function receives an array of shape ``(k, m)`` (one window per row) and returns
``k`` reals; a classifier receives ``(k, L)`` blocks and returns ``k`` integer
class labels in ``0..K``.  Catalog functions are frozen dataclasses so that two
specs built from the same parameters compare equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, NamedTuple

import numpy as np

from .errors import (
    BadParams,
    BatteryError,
    DegenerateSigma,
    DimensionMismatch,
    DivisibilityViolation,
    EmptyCell,
    EnumerationTooLarge,
    InvalidFunctionOutput,
    NegativeVarianceEstimate,
    NonFiniteMoment,
    WindowTooShort,
)

DEFAULT_CAP = 2**24
DEFAULT_MC_REPLICATES = 10**6
_ENUM_CHUNK = 2**18
_MC_CHUNK = 2**16

WindowFunction = Callable[[np.ndarray], np.ndarray]


# --------------------------------------------------------------------------- spaces


@dataclass(frozen=True)
class SampleSpace:
    kind: str  # "finite" or "unit_interval"
    R: int | None = None

    def __post_init__(self):
        if self.kind == "finite":
            if self.R is None or self.R < 2:
                raise BadParams(f"finite sample space needs R >= 2, got {self.R}")
        elif self.kind == "unit_interval":
            if self.R is not None:
                raise BadParams("unit_interval space takes no alphabet size")
        else:
            raise BadParams(f"unknown sample space kind {self.kind!r}")

    @classmethod
    def finite(cls, R: int) -> "SampleSpace":
        return cls("finite", int(R))

    @classmethod
    def unit_interval(cls) -> "SampleSpace":
        return cls("unit_interval")

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def storage_dtype(self) -> np.dtype:
        if not self.is_finite:
            return np.dtype(np.float64)
        return np.dtype(np.uint8) if self.R <= 256 else np.dtype(np.int64)

    @property
    def window_dtype(self) -> np.dtype:
        """dtype handed to plug-in functions."""
        return np.dtype(np.int64) if self.is_finite else np.dtype(np.float64)

    def contains(self, data: np.ndarray) -> bool:
        data = np.asarray(data)
        if data.size == 0:
            return True
        if self.is_finite:
            if data.dtype.kind == "f":
                if not np.all(data == np.floor(data)):
                    return False
            elif data.dtype.kind not in "iub":
                return False
            return bool(data.min() >= 0 and data.max() <= self.R - 1)
        if data.dtype.kind not in "fiub":
            return False
        return bool(np.all(np.isfinite(data)) and data.min() >= 0.0 and data.max() <= 1.0)


@dataclass(frozen=True)
class NullModel:
    """The H0 law: iid draws from ``pmf`` on a finite alphabet, or U[0,1]."""

    space: SampleSpace
    pmf: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.space.is_finite:
            if self.pmf is None:
                object.__setattr__(self, "pmf", tuple([1.0 / self.space.R] * self.space.R))
            p = np.asarray(self.pmf, dtype=float)
            if p.shape != (self.space.R,):
                raise BadParams(f"pmf must have {self.space.R} entries, got {p.shape}")
            if np.any(p < 0) or not np.all(np.isfinite(p)):
                raise BadParams("pmf entries must be finite and nonnegative")
            if abs(math.fsum(self.pmf) - 1.0) > 1e-12:
                raise BadParams(f"pmf sums to {math.fsum(self.pmf)!r}, not 1")
            object.__setattr__(self, "pmf", tuple(float(x) for x in self.pmf))
        elif self.pmf is not None:
            raise BadParams("the unit-interval null model is the uniform law; no pmf")

    @classmethod
    def bernoulli(cls, p: float = 0.5) -> "NullModel":
        return cls(SampleSpace.finite(2), (1.0 - p, p))

    @classmethod
    def finite(cls, pmf) -> "NullModel":
        pmf = tuple(float(x) for x in pmf)
        return cls(SampleSpace.finite(len(pmf)), pmf)

    @classmethod
    def uniform(cls) -> "NullModel":
        return cls(SampleSpace.unit_interval())

    @property
    def is_finite(self) -> bool:
        return self.space.is_finite

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.is_finite:
            p = self.pmf
            if all(x == p[0] for x in p):
                return rng.integers(0, self.space.R, size=size, dtype=np.int64)
            return rng.choice(self.space.R, size=size, p=np.asarray(p))
        return rng.random(size)

    def enumerate_windows(self, w: int, cap: int = DEFAULT_CAP, chunk: int = _ENUM_CHUNK):
        """Yield ``(windows, probs)`` chunks covering every point of X^w.

        Windows are listed in lexicographic order, first coordinate most significant.
        """
        if not self.is_finite:
            raise BadParams("exact enumeration needs a finite sample space")
        R = self.space.R
        total = R**w
        if total > cap:
            raise EnumerationTooLarge(f"|X|^{w} = {total} exceeds the enumeration cap {cap}")
        pmf = np.asarray(self.pmf)
        powers = R ** np.arange(w - 1, -1, -1, dtype=np.int64)
        for start in range(0, total, chunk):
            idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
            windows = (idx[:, None] // powers[None, :]) % R
            probs = np.prod(pmf[windows], axis=1)
            yield windows, probs


def mc_chunks(seed: int, total: int, chunk: int = _MC_CHUNK):
    """Yield ``(chunk_index, size, rng)`` with one independent stream per chunk.

    Chunk ``c`` always draws from ``SeedSequence(seed, spawn_key=(c,))`` so the
    draws do not depend on how chunks are scheduled.
    """
    for c, start in enumerate(range(0, total, chunk)):
        size = min(chunk, total - start)
        yield c, size, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(c,)))


# --------------------------------------------------------------------------- moments


class Moments(NamedTuple):
    mean: float
    sigma: float
    mean_se: float = 0.0
    var_se: float = 0.0
    method: str = "exact_enumeration"


def _checked(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteMoment(f"{what} produced non-finite values")
    return values


def _shifted_values(f: WindowFunction, windows: np.ndarray, m: int) -> np.ndarray:
    """f evaluated at the m overlapping sub-windows of each (2m-1)-window."""
    return np.stack([_checked(f(windows[:, i : i + m]), "window function") for i in range(m)], axis=1)


def compute_window_moments(
    f: WindowFunction,
    m: int,
    null: NullModel,
    method: str = "exact_enumeration",
    *,
    M: int = DEFAULT_MC_REPLICATES,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    mean: float | None = None,
    variance: float | None = None,
) -> Moments:
    """Mean and long-run standard deviation of the (m-1)-dependent series f(window_i).

    ``sigma**2 = Var f(e_1..e_m) + 2 * sum_{i=2..m} cov(f(e_i..e_{i+m-1}), f(e_1..e_m))``.
    """
    if m < 1:
        raise BadParams(f"window length must be positive, got {m}")
    w = 2 * m - 1
    if method == "closed_form":
        if m != 1:
            raise BadParams("closed_form moments are only defined for window length 1")
        if mean is None or variance is None:
            raise BadParams("closed_form needs explicit mean and variance")
        if not (math.isfinite(mean) and math.isfinite(variance)):
            raise NonFiniteMoment("closed-form moments must be finite")
        if variance < 0:
            raise NegativeVarianceEstimate(f"closed-form variance {variance} < 0")
        return Moments(float(mean), math.sqrt(variance), 0.0, 0.0, "closed_form")

    if method == "exact_enumeration":
        # two passes: mean first, then centred second moments
        parts = []
        for windows, probs in null.enumerate_windows(w, cap):
            parts.append(math.fsum(probs * _checked(f(windows[:, :m]), "window function")))
        E = math.fsum(parts)
        var_parts, cov_parts = [], [[] for _ in range(m)]
        for windows, probs in null.enumerate_windows(w, cap):
            vals = _shifted_values(f, windows, m) - E
            var_parts.append(math.fsum(probs * vals[:, 0] ** 2))
            for i in range(1, m):
                cov_parts[i].append(math.fsum(probs * vals[:, 0] * vals[:, i]))
        var = math.fsum(var_parts) + 2.0 * math.fsum(math.fsum(c) for c in cov_parts[1:])
        if not math.isfinite(var):
            raise NonFiniteMoment("non-finite variance")
        if var < 0:
            if var < -1e-12 * max(1.0, abs(E)) ** 2:
                raise NegativeVarianceEstimate(f"exact long-run variance {var} < 0")
            var = 0.0
        return Moments(E, math.sqrt(var), 0.0, 0.0, "exact_enumeration")

    if method == "monte_carlo":
        if M < 2:
            raise BadParams("monte_carlo moments need at least 2 replicates")
        vals = np.concatenate(
            [_shifted_values(f, null.sample(rng, (size, w)), m) for _, size, rng in mc_chunks(seed, M)]
        )
        E = float(np.mean(vals[:, 0]))
        c = vals - E
        g = c[:, 0] ** 2 + 2.0 * np.sum(c[:, :1] * c[:, 1:], axis=1)
        var = float(np.mean(g))
        mean_se = float(np.std(vals[:, 0], ddof=1) / math.sqrt(M))
        var_se = float(np.std(g, ddof=1) / math.sqrt(M))
        if not (math.isfinite(E) and math.isfinite(var)):
            raise NonFiniteMoment("non-finite Monte-Carlo moment")
        if var < 0:
            if var < -5.0 * var_se:
                raise NegativeVarianceEstimate(
                    f"Monte-Carlo long-run variance {var:.3g} is below -5 SE ({var_se:.3g}); increase M"
                )
            var = 0.0
        return Moments(E, math.sqrt(var), mean_se, var_se, "monte_carlo")

    raise BadParams(f"unknown moment method {method!r}")


def compute_sum_moments(f, m, null, method="exact_enumeration", **kw) -> Moments:
    return compute_window_moments(f, m, null, method, **kw)


def compute_lb_moments(f, m, null, method="exact_enumeration", **kw) -> Moments:
    return compute_window_moments(f, m, null, method, **kw)


def compute_sb_cells(
    classifier: Callable[[np.ndarray], np.ndarray],
    L: int,
    K: int,
    null: NullModel,
    method: str = "exact_enumeration",
    *,
    M: int = DEFAULT_MC_REPLICATES,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    cells=None,
) -> tuple[float, ...]:
    """Cell probabilities P(classifier(block) = j), j = 0..K, under the null."""
    if method == "analytic_plugin":
        if cells is None:
            raise BadParams("analytic_plugin needs the cell vector")
        out = np.asarray(cells, dtype=float)
        if out.shape != (K + 1,):
            raise DimensionMismatch(f"expected {K + 1} cells, got {out.shape}")
    elif method == "exact_enumeration":
        acc = np.zeros(K + 1)
        for windows, probs in null.enumerate_windows(L, cap):
            labels = _labels(classifier(windows), K)
            acc += np.bincount(labels, weights=probs, minlength=K + 1)
        out = acc
    elif method == "monte_carlo":
        counts = np.zeros(K + 1, dtype=np.int64)
        for _, size, rng in mc_chunks(seed, M):
            counts += np.bincount(_labels(classifier(null.sample(rng, (size, L))), K), minlength=K + 1)
        out = counts / M
    else:
        raise BadParams(f"unknown cell method {method!r}")
    empty = [j for j, p in enumerate(out) if not p > 0]
    if empty:
        raise EmptyCell(f"cells {empty} have probability 0 under the null model", constraint="E_sb>0")
    return tuple(float(x) for x in out)


def _labels(labels: np.ndarray, K: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype.kind not in "iub":
        if not np.all(np.isfinite(labels)) or not np.all(labels == np.floor(labels)):
            raise InvalidFunctionOutput("classifier returned non-integer labels")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() > K):
        raise InvalidFunctionOutput(f"classifier labels must lie in 0..{K}")
    return labels.astype(np.int64, copy=False)


# --------------------------------------------------------------------------- specs


@dataclass(frozen=True)
class SumSpec:
    f: WindowFunction
    m: int
    mean: float
    sigma: float
    bound: float | None = None
    name: str = "sum"
    origin: Any = None  # (test_id, params) for catalog-built specs


@dataclass(frozen=True)
class LongBlockSpec:
    f: WindowFunction
    m: int
    n_blocks: int
    mean: float
    sigma: float
    bound: float | None = None
    name: str = "lb"
    origin: Any = None


@dataclass(frozen=True)
class ShortBlockSpec:
    classifier: Callable[[np.ndarray], np.ndarray]
    length: int
    cells: tuple[float, ...]
    name: str = "sb"
    origin: Any = None

    @property
    def K(self) -> int:
        return len(self.cells) - 1


@dataclass(frozen=True)
class QuadSpec:
    """sum_i (sum_q d[i][q] * T_sum[sum_refs[q]])**2."""

    d: tuple[tuple[float, ...], ...]
    sum_refs: tuple[int, ...]
    name: str = "quad"

    def __post_init__(self):
        d = tuple(tuple(float(x) for x in row) for row in self.d)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "sum_refs", tuple(int(q) for q in self.sum_refs))
        if not d:
            raise DimensionMismatch("quadratic statistic needs at least one row")
        if any(len(row) != len(self.sum_refs) for row in d):
            raise DimensionMismatch("every row of d must have one coefficient per summing statistic")

    @property
    def tau(self) -> int:
        return len(self.d)

    @property
    def Q(self) -> int:
        return len(self.sum_refs)

    def form(self) -> np.ndarray:
        """The induced nonnegative-definite matrix d^T d."""
        d = np.asarray(self.d)
        return d.T @ d


@dataclass(frozen=True)
class Triple:
    sum: SumSpec
    lb: LongBlockSpec
    sb: ShortBlockSpec


@dataclass(frozen=True)
class BatteryConfig:
    null: NullModel
    triples: tuple[Triple, ...]
    quads: tuple[QuadSpec, ...] = ()
    N: int = 1
    h: int = 1
    s: int = 1
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, "triples", tuple(self.triples))
        object.__setattr__(self, "quads", tuple(self.quads))


@dataclass(frozen=True)
class ValidatedBattery:
    config: BatteryConfig
    s_star_lower: int
    K_star: int
    warnings: tuple[str, ...] = field(default=(), compare=False)

    # convenience pass-throughs
    null = property(lambda self: self.config.null)
    triples = property(lambda self: self.config.triples)
    quads = property(lambda self: self.config.quads)
    N = property(lambda self: self.config.N)
    h = property(lambda self: self.config.h)
    s = property(lambda self: self.config.s)
    n = property(lambda self: self.config.n)

    @property
    def Q(self) -> int:
        return len(self.config.triples)

    @property
    def J(self) -> int:
        return len(self.config.quads)

    def labels(self) -> tuple[str, ...]:
        out = []
        for q in range(self.Q):
            out += [f"sum[{q}]", f"lb[{q}]", f"sb[{q}]"]
        out += [f"quad[{j}]" for j in range(self.J)]
        return tuple(out)

    def with_n(self, n: int) -> "ValidatedBattery":
        return validate_battery(replace(self.config, n=int(n)))


def _check_sigma(sigma: float, q: int, kind: str):
    if not (math.isfinite(sigma) and sigma > 0):
        raise DegenerateSigma(f"triple {q}: {kind} sigma must lie in (0, inf), got {sigma!r}", q, f"sigma_{kind}")


def validate_battery(config: BatteryConfig) -> ValidatedBattery:
    """Check every battery constraint and fill in the derived constants."""
    if not config.triples:
        raise BatteryError("a battery needs at least one triple", constraint="Q>=1")
    for name in ("N", "h", "s", "n"):
        v = getattr(config, name)
        if int(v) != v or v < 1:
            raise BatteryError(f"{name} must be a positive integer, got {v!r}", constraint=name)
    warnings = []
    max_m = 1
    for q, t in enumerate(config.triples):
        _check_sigma(t.sum.sigma, q, "sum")
        _check_sigma(t.lb.sigma, q, "lb")
        if not math.isfinite(t.sum.mean) or not math.isfinite(t.lb.mean):
            raise DegenerateSigma(f"triple {q}: non-finite mean", q, "mean")
        if t.sum.m < 1 or t.lb.m < 1 or t.sb.length < 1 or t.lb.n_blocks < 1:
            raise BatteryError(f"triple {q}: window lengths and block counts must be positive", q, "positive")
        cells = t.sb.cells
        if len(cells) < 1:
            raise BatteryError(f"triple {q}: short-block statistic needs at least one cell", q, "K_sb")
        empty = [j for j, p in enumerate(cells) if not p > 0]
        if empty:
            raise EmptyCell(f"triple {q}: cells {empty} have zero probability", q, "E_sb>0")
        if abs(math.fsum(cells) - 1.0) > 1e-12:
            raise BatteryError(f"triple {q}: cell probabilities sum to {math.fsum(cells)!r}", q, "sum E_sb = 1")
        if config.N % t.lb.n_blocks:
            raise DivisibilityViolation(
                f"triple {q}: N_lb = {t.lb.n_blocks} does not divide N = {config.N}", q, "N_lb | N"
            )
        if config.h % t.sb.length:
            raise DivisibilityViolation(
                f"triple {q}: L_sb = {t.sb.length} does not divide h = {config.h}", q, "L_sb | h"
            )
        for kind, spec in (("sum", t.sum), ("lb", t.lb)):
            if spec.bound is None:
                warnings.append(f"triple {q}: {kind} function has no declared bound (fine under H0)")
        max_m = max(max_m, t.sum.m, t.lb.m)
    s_star = config.h + max_m - 1
    if config.s < s_star:
        raise WindowTooShort(f"s = {config.s} is below the minimal window {s_star}", constraint="s >= s*")
    if config.n < config.N * (2 * config.h - 1):
        raise BatteryError(
            f"n = {config.n} is below N(2h-1) = {config.N * (2 * config.h - 1)}", constraint="n >= N(2h-1)"
        )
    Q = len(config.triples)
    for j, quad in enumerate(config.quads):
        bad = [r for r in quad.sum_refs if not 0 <= r < Q]
        if bad:
            raise DimensionMismatch(f"quad {j}: sum_refs {bad} do not name triples 0..{Q - 1}")
    K_star = 3 * Q + sum(t.sb.K for t in config.triples)
    return ValidatedBattery(config, s_star, K_star, tuple(warnings))
