"""Concrete test instances: bit extraction, GF(2) rank and the serial-over statistic.

Test ids and their parameters (stable strings, used by the CLI config):

=================  ===========================================  ==========
id                 params                                       kind
=================  ===========================================  ==========
monobit            --                                           sum
sample_corr        k (lag, >= 1)                                sum
centered_square    center (default 0.5)                         sum
window_sum         m                                            sum
tuple_indicator    pattern (list of symbols), r_bits            sum
block_frequency    N_lb                                         lb
hamming_weight2    r_bits, N_lb                                 lb
ones_count         L_sb, classes (optional)                     sb
weight_distrib     alpha, beta, L_sb, classes (optional)        sb
permutation        L_sb                                         sb
matrix_rank        V1, V2, r_bits, classes (optional)           sb
=================  ===========================================  ==========

``classes`` is a list of lists of raw classifier values forming a partition of
the classifier's range; by default every raw value is its own class (for
``matrix_rank`` the default groups ranks ``{<= min-2}, {min-1}, {min}``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .errors import BadParams, CapExceeded, InvalidFunctionOutput, OutOfRange, SequenceTooShort, UnknownTest
from .model import (
    DEFAULT_CAP,
    LongBlockSpec,
    NullModel,
    QuadSpec,
    ShortBlockSpec,
    SumSpec,
    compute_sb_cells,
    compute_window_moments,
)
from .statistics import _data

# --------------------------------------------------------------------------- bits


def g_bits(theta: float, r_bits: int) -> tuple[int, ...]:
    """The ``r_bits`` most significant binary digits of ``theta``; 1.0 maps to all ones."""
    if not 1 <= r_bits <= 52:
        raise OutOfRange(f"r_bits must lie in 1..52, got {r_bits}")
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise OutOfRange(f"theta = {theta!r} is outside [0, 1]")
    k = min(int(math.floor(theta * 2**r_bits)), 2**r_bits - 1)
    return tuple((k >> (r_bits - i)) & 1 for i in range(1, r_bits + 1))


def symbols(values: np.ndarray, r_bits: int) -> np.ndarray:
    """Integer symbol whose binary digits are ``g_bits(value, r_bits)``.

    Integer input is taken to be already symbolized and is range-checked.
    """
    values = np.asarray(values)
    R = 1 << r_bits
    if values.dtype.kind == "f":
        return np.minimum(np.floor(values * R), R - 1).astype(np.int64)
    out = values.astype(np.int64)
    if out.size and (out.min() < 0 or out.max() >= R):
        raise OutOfRange(f"integer symbols must lie in 0..{R - 1}")
    return out


# --------------------------------------------------------------------------- GF(2)


def gf2_rank(matrix) -> int:
    """Rank over GF(2) of a 0/1 matrix, by elimination on integer row bitsets."""
    a = np.asarray(matrix, dtype=np.int64) & 1
    if a.ndim != 2:
        raise BadParams("gf2_rank needs a 2-d matrix")
    rows = [int("".join(map(str, r)), 2) if r.size else 0 for r in a]
    rank = 0
    while rows:
        pivot = rows.pop()
        if pivot:
            rank += 1
            top = pivot.bit_length() - 1
            rows = [r ^ pivot if (r >> top) & 1 else r for r in rows]
    return rank


def gf2_rank_batch(rows: np.ndarray, n_cols: int) -> np.ndarray:
    """Ranks of many matrices at once; ``rows[k, v]`` is row v of matrix k as a bitmask."""
    rows = np.array(rows, dtype=np.uint64)
    k, v1 = rows.shape
    used = np.zeros((k, v1), dtype=bool)
    rank = np.zeros(k, dtype=np.int64)
    ar = np.arange(k)
    for c in range(n_cols):
        bit = ((rows >> np.uint64(c)) & np.uint64(1)).astype(bool)
        cand = bit & ~used
        has = cand.any(axis=1)
        if not has.any():
            continue
        piv = np.argmax(cand, axis=1)
        prow = rows[ar, piv]
        mask = bit & has[:, None]
        mask[ar, piv] = False
        rows = np.where(mask, rows ^ prow[:, None], rows)
        used[ar[has], piv[has]] = True
        rank += has
    return rank


def gf2_rank_probabilities(V1: int, V2: int) -> list[Fraction]:
    """P(rank = r), r = 0..min(V1, V2), for a uniformly random V1 x V2 matrix over GF(2)."""
    out = []
    for r in range(min(V1, V2) + 1):
        p = Fraction(2) ** (r * (V1 + V2 - r) - V1 * V2)
        for i in range(r):
            p *= (1 - Fraction(1, 2 ** (V1 - i))) * (1 - Fraction(1, 2 ** (V2 - i))) / (1 - Fraction(1, 2 ** (r - i)))
        out.append(p)
    return out


# --------------------------------------------------------------------------- window functions


@dataclass(frozen=True)
class Coordinate:
    """f(theta_1..theta_m) = theta_{index+1}."""

    index: int = 0

    def __call__(self, w):
        return np.asarray(w[:, self.index], dtype=float)


@dataclass(frozen=True)
class LagProduct:
    """theta_1 * theta_m."""

    def __call__(self, w):
        return np.asarray(w[:, 0], dtype=float) * w[:, -1]


@dataclass(frozen=True)
class WindowSum:
    def __call__(self, w):
        return np.sum(w, axis=1, dtype=float)


@dataclass(frozen=True)
class CenteredPower:
    center: float = 0.5
    power: int = 2

    def __call__(self, w):
        return (np.asarray(w[:, 0], dtype=float) - self.center) ** self.power


@dataclass(frozen=True)
class AllEqual:
    def __call__(self, w):
        return np.all(w == w[:, :1], axis=1).astype(float)


@dataclass(frozen=True)
class BitPositionSum:
    """Sum of the 1-based positions of the set bits among the first r_bits bits."""

    r_bits: int

    def __call__(self, w):
        sym = symbols(w[:, 0], self.r_bits)
        out = np.zeros(sym.shape, dtype=float)
        for i in range(1, self.r_bits + 1):
            out += i * ((sym >> (self.r_bits - i)) & 1)
        return out


@dataclass(frozen=True)
class TupleIndicator:
    """I(symbol(theta_j) = pattern_j for every j)."""

    pattern: tuple[int, ...]
    r_bits: int

    def __call__(self, w):
        sym = symbols(w, self.r_bits)
        return np.all(sym == np.asarray(self.pattern)[None, :], axis=1).astype(float)


# --------------------------------------------------------------------------- classifiers


@dataclass(frozen=True)
class OnesCount:
    def __call__(self, blocks):
        return np.sum(blocks == 1, axis=1)


@dataclass(frozen=True)
class IntervalHits:
    alpha: float
    beta: float

    def __call__(self, blocks):
        return np.sum((blocks >= self.alpha) & (blocks < self.beta), axis=1)


@dataclass(frozen=True)
class PermutationIndex:
    """Lexicographic index of the ordering permutation; ties broken by position."""

    def __call__(self, blocks):
        order = np.argsort(blocks, axis=1, kind="stable")
        L = order.shape[1]
        idx = np.zeros(order.shape[0], dtype=np.int64)
        for i in range(L):
            smaller_later = np.sum(order[:, i + 1 :] < order[:, i : i + 1], axis=1)
            idx += smaller_later * math.factorial(L - 1 - i)
        return idx


@dataclass(frozen=True)
class MatrixRank:
    """GF(2) rank of the V1 x V2 matrix whose rows come from consecutive g_bits outputs."""

    V1: int
    V2: int
    r_bits: int

    @property
    def per_row(self) -> int:
        return -(-self.V2 // self.r_bits)

    def row_masks(self, blocks) -> np.ndarray:
        c, r = self.per_row, self.r_bits
        sym = symbols(blocks, r).reshape(blocks.shape[0], self.V1, c)
        rows = np.zeros(sym.shape[:2], dtype=np.uint64)
        for j in range(c):
            rows = (rows << np.uint64(r)) | sym[:, :, j].astype(np.uint64)
        return rows >> np.uint64(r * c - self.V2)

    def __call__(self, blocks):
        if self.V2 > 64 or self.r_bits * self.per_row > 64:
            raise BadParams("matrix_rank supports rows of at most 64 bits")
        return gf2_rank_batch(self.row_masks(blocks), self.V2)


@dataclass(frozen=True)
class PartitionClassifier:
    """Compose a raw block function with a partition of its values into classes."""

    raw: object
    classes: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        classes = tuple(tuple(sorted(int(v) for v in c)) for c in self.classes)
        object.__setattr__(self, "classes", classes)
        flat = [v for c in classes for v in c]
        if any(not c for c in classes) or len(flat) != len(set(flat)) or min(flat) < 0:
            raise BadParams("classes must be nonempty, disjoint sets of nonnegative values")

    @property
    def K(self) -> int:
        return len(self.classes) - 1

    def __call__(self, blocks):
        raw = np.asarray(self.raw(blocks), dtype=np.int64)
        lut = np.full(max(v for c in self.classes for v in c) + 1, -1, dtype=np.int64)
        for j, c in enumerate(self.classes):
            lut[list(c)] = j
        if raw.size and (raw.min() < 0 or raw.max() >= lut.size or np.any(lut[raw] < 0)):
            raise InvalidFunctionOutput("classifier produced a value outside the class partition")
        return lut[raw]


def _partition(classes, values) -> tuple[tuple[int, ...], ...]:
    values = list(values)
    if classes is None:
        return tuple((v,) for v in values)
    classes = tuple(tuple(int(v) for v in c) for c in classes)
    flat = sorted(v for c in classes for v in c)
    if flat != sorted(values) or any(not c for c in classes):
        raise BadParams(f"classes {classes} are not a partition of {values}")
    return classes


# --------------------------------------------------------------------------- instantiation


def _freeze(value):
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


def _origin(test_id, params):
    return (test_id, tuple(sorted((k, _freeze(v)) for k, v in params.items())))


def _uniform_space_bits(null: NullModel, r_bits: int) -> bool:
    """True if symbols are iid uniform on 2^r_bits values under the null."""
    if not null.is_finite:
        return True
    return null.space.R == 2**r_bits and all(p == null.pmf[0] for p in null.pmf)


def _window_moments(f, m, null, closed=None, method="auto", **kw):
    if method == "auto":
        if closed is not None:
            return closed
        method = "exact_enumeration" if null.is_finite else "monte_carlo"
    mo = compute_window_moments(f, m, null, method, **kw)
    return mo.mean, mo.sigma


_UNIT_MOMENTS = (0.5, math.sqrt(1.0 / 12.0))  # mean and sd of theta ~ U[0,1]


def _require_unit(null: NullModel, test_id: str):
    if null.is_finite:
        raise BadParams(f"{test_id} is defined for the unit-interval null model")


def instantiate_test(test_id: str, params: dict | None = None, null: NullModel | None = None, method: str = "auto", **kw):
    """Build a fully populated statistic spec for a catalog test.

    ``method`` selects how moments/cells are obtained when no closed form is
    known: ``auto`` (exact enumeration on finite alphabets, Monte-Carlo on
    [0,1]) or any method accepted by the model-level moment functions.
    """
    params = dict(params or {})
    null = null or NullModel.bernoulli()
    origin = _origin(test_id, params)
    unit = not null.is_finite
    allowed = {
        "monobit": set(),
        "sample_corr": {"k"},
        "centered_square": {"center"},
        "window_sum": {"m"},
        "tuple_indicator": {"pattern", "r_bits"},
        "block_frequency": {"N_lb"},
        "hamming_weight2": {"r_bits", "N_lb"},
        "ones_count": {"L_sb", "classes"},
        "weight_distrib": {"alpha", "beta", "L_sb", "classes"},
        "permutation": {"L_sb"},
        "matrix_rank": {"V1", "V2", "r_bits", "classes"},
    }
    if test_id not in allowed:
        raise UnknownTest(f"unknown test id {test_id!r}")
    extra = set(params) - allowed[test_id]
    if extra:
        raise BadParams(f"{test_id}: unexpected parameters {sorted(extra)}")

    def need(name, lo=1):
        if name not in params:
            raise BadParams(f"{test_id}: missing parameter {name!r}")
        v = params[name]
        if int(v) != v or v < lo:
            raise BadParams(f"{test_id}: {name} must be an integer >= {lo}, got {v!r}")
        return int(v)

    if test_id == "monobit":
        f = Coordinate()
        E, sd = _window_moments(f, 1, null, _UNIT_MOMENTS if unit else None, method, **kw)
        bound = 1.0 if unit else float(null.space.R - 1)
        return SumSpec(f, 1, E, sd, bound, "monobit", origin)

    if test_id == "sample_corr":
        k = need("k")
        f = LagProduct()
        closed = (0.25, math.sqrt(13.0) / 12.0) if unit else None
        E, sd = _window_moments(f, k + 1, null, closed, method, **kw)
        bound = 1.0 if unit else float((null.space.R - 1) ** 2)
        return SumSpec(f, k + 1, E, sd, bound, f"sample_corr(k={k})", origin)

    if test_id == "centered_square":
        c = float(params.get("center", 0.5))
        f = CenteredPower(c, 2)
        closed = None
        if unit:
            mean = (c**3 + (1 - c) ** 3) / 3.0
            fourth = (c**5 + (1 - c) ** 5) / 5.0
            closed = (mean, math.sqrt(fourth - mean**2))
        E, sd = _window_moments(f, 1, null, closed, method, **kw)
        return SumSpec(f, 1, E, sd, max(c, 1 - c) ** 2 if unit else None, f"centered_square(c={c})", origin)

    if test_id == "window_sum":
        m = need("m")
        f = WindowSum()
        closed = (m / 2.0, math.sqrt(m / 12.0)) if (unit and m == 1) else None
        E, sd = _window_moments(f, m, null, closed, method, **kw)
        return SumSpec(f, m, E, sd, None, f"window_sum(m={m})", origin)

    if test_id == "tuple_indicator":
        r = need("r_bits")
        pattern = tuple(int(v) for v in params.get("pattern", ()))
        if len(pattern) < 1 or any(not 0 <= v < 2**r for v in pattern):
            raise BadParams(f"tuple_indicator: pattern must be nonempty symbols in 0..{2**r - 1}")
        f = TupleIndicator(pattern, r)
        m = len(pattern)
        if _uniform_space_bits(null, r):
            mo = compute_window_moments(f, m, NullModel.finite([2.0**-r] * 2**r))
            E, sd = mo.mean, mo.sigma
        else:
            E, sd = _window_moments(f, m, null, None, method, **kw)
        return SumSpec(f, m, E, sd, 1.0, f"tuple_indicator({pattern})", origin)

    if test_id == "block_frequency":
        n_lb = need("N_lb")
        f = Coordinate()
        E, sd = _window_moments(f, 1, null, _UNIT_MOMENTS if unit else None, method, **kw)
        return LongBlockSpec(f, 1, n_lb, E, sd, 1.0 if unit else float(null.space.R - 1), f"block_frequency(N_lb={n_lb})", origin)

    if test_id == "hamming_weight2":
        r, n_lb = need("r_bits"), need("N_lb")
        f = BitPositionSum(r)
        if _uniform_space_bits(null, r):
            E = r * (r + 1) / 4.0
            sd = math.sqrt(r * (r + 1) * (2 * r + 1) / 24.0)
        else:
            E, sd = _window_moments(f, 1, null, None, method, **kw)
        return LongBlockSpec(f, 1, n_lb, E, sd, r * (r + 1) / 2.0, f"hamming_weight2(r={r},N_lb={n_lb})", origin)

    cells_kw = {k: v for k, v in kw.items() if k in ("M", "seed", "cap")}
    cell_method = "exact_enumeration" if method in ("auto", "closed_form") else method

    if test_id == "ones_count":
        if unit:
            raise BadParams("ones_count is defined for finite alphabets")
        L = need("L_sb")
        classes = _partition(params.get("classes"), range(L + 1))
        clf = PartitionClassifier(OnesCount(), classes)
        cells = compute_sb_cells(clf, L, clf.K, null, cell_method, **cells_kw)
        return ShortBlockSpec(clf, L, cells, f"ones_count(L_sb={L})", origin)

    if test_id == "weight_distrib":
        _require_unit(null, test_id)
        L = need("L_sb")
        a, b = float(params.get("alpha", 0.0)), float(params.get("beta", 0.5))
        if not 0.0 <= a < b <= 1.0:
            raise BadParams(f"weight_distrib needs 0 <= alpha < beta <= 1, got ({a}, {b})")
        classes = _partition(params.get("classes"), range(L + 1))
        p = b - a
        binom = [math.comb(L, i) * p**i * (1 - p) ** (L - i) for i in range(L + 1)]
        cells = tuple(math.fsum(binom[v] for v in c) for c in classes)
        clf = PartitionClassifier(IntervalHits(a, b), classes)
        cells = compute_sb_cells(clf, L, clf.K, null, "analytic_plugin", cells=cells)
        return ShortBlockSpec(clf, L, cells, f"weight_distrib({a},{b},L_sb={L})", origin)

    if test_id == "permutation":
        _require_unit(null, test_id)
        L = need("L_sb")
        if L > 8:
            raise BadParams("permutation supports L_sb <= 8")
        fact = math.factorial(L)
        clf = PartitionClassifier(PermutationIndex(), tuple((v,) for v in range(fact)))
        cells = compute_sb_cells(clf, L, fact - 1, null, "analytic_plugin", cells=[1.0 / fact] * fact)
        return ShortBlockSpec(clf, L, cells, f"permutation(L_sb={L})", origin)

    if test_id == "matrix_rank":
        V1, V2, r = need("V1"), need("V2"), need("r_bits")
        if V2 > 64:
            raise BadParams("matrix_rank supports V2 <= 64")
        mn = min(V1, V2)
        if params.get("classes") is None:
            classes = (tuple(range(0, mn - 1)), (mn - 1,), (mn,)) if mn >= 2 else ((0,), (1,))
        else:
            classes = _partition(params["classes"], range(mn + 1))
        raw = MatrixRank(V1, V2, r)
        clf = PartitionClassifier(raw, classes)
        L = V1 * raw.per_row
        if _uniform_space_bits(null, r):
            probs = gf2_rank_probabilities(V1, V2)
            cells = tuple(float(sum((probs[v] for v in c), Fraction(0))) for c in classes)
            cells = compute_sb_cells(clf, L, clf.K, null, "analytic_plugin", cells=cells)
        else:
            cells = compute_sb_cells(clf, L, clf.K, null, cell_method, **cells_kw)
        return ShortBlockSpec(clf, L, cells, f"matrix_rank({V1}x{V2},r={r})", origin)

    raise UnknownTest(test_id)  # pragma: no cover


# --------------------------------------------------------------------------- serial-over


@dataclass(frozen=True, eq=False)
class SerialCounts:
    """Cyclic m- and (m-1)-tuple counts, plus the open (non-cyclic) m-tuple counts."""

    R: int
    m: int
    n: int
    nu_m: np.ndarray
    nu_m1: np.ndarray
    nu_m_open: np.ndarray

    def marginal(self) -> np.ndarray:
        """Sum of nu_m over the last symbol; equals nu_m1 by construction."""
        return self.nu_m.reshape(-1, self.R).sum(axis=1)


def _tuple_codes(sym: np.ndarray, m: int, R: int) -> np.ndarray:
    code = np.zeros(sym.size - m + 1, dtype=np.int64)
    for j in range(m):
        code = code * R + sym[j : sym.size - m + 1 + j]
    return code


def serial_over_counts(seq, r_bits: int, m: int, cap: int = DEFAULT_CAP) -> SerialCounts:
    if m < 2:
        raise BadParams(f"serial-over needs m >= 2, got {m}")
    R = 2**r_bits
    if R**m > cap:
        raise CapExceeded(f"R^m = {R**m} tuples exceeds the cap {cap}")
    data, _ = _data(seq)
    n = data.size
    if n < m:
        raise SequenceTooShort(f"n = {n} is shorter than m = {m}")
    sym = symbols(data, r_bits)
    ext = np.concatenate([sym, sym[: m - 1]])
    nu_m = np.bincount(_tuple_codes(ext, m, R), minlength=R**m)
    ext1 = np.concatenate([sym, sym[: m - 2]])
    nu_m1 = np.bincount(_tuple_codes(ext1, m - 1, R), minlength=R ** (m - 1))
    nu_open = np.bincount(_tuple_codes(sym, m, R), minlength=R**m)
    return SerialCounts(R, m, n, nu_m, nu_m1, nu_open)


def eval_T_SO(counts: SerialCounts, variant: str = "classic") -> float:
    """Serial-over statistic. ``classic`` uses cyclic counts; ``tilde`` applies the
    same quadratic form to the standardized open counts."""
    R, m = counts.R, counts.m
    if variant == "classic":
        a = int(np.sum(counts.nu_m.astype(object) ** 2))
        b = int(np.sum(counts.nu_m1.astype(object) ** 2))
        return float(Fraction(R**m * a - R ** (m - 1) * b, counts.n))
    if variant == "tilde":
        n1 = counts.n - m + 1
        nu = counts.nu_m_open.astype(object)
        prefix = counts.nu_m_open.reshape(-1, R).sum(axis=1).astype(object)
        a = int(np.sum(nu**2))
        b = int(np.sum(prefix**2))
        return float(Fraction(R**m * a - R ** (m - 1) * b, n1))
    raise BadParams(f"unknown T_SO variant {variant!r}")


def serial_over_form(R: int, m: int) -> np.ndarray:
    """Coefficient matrix c with T_SO = sum_ab c_ab Z_a Z_b over standardized m-tuple counts."""
    size = R**m
    prefix = np.arange(size) // R
    same = (prefix[:, None] == prefix[None, :]).astype(float)
    return R**m * np.eye(size) - R ** (m - 1) * same


def serial_over_quadratic(r_bits: int, m: int, null: NullModel | None = None, tol: float = 1e-10):
    """Summing statistics of the m-tuple indicators and the quadratic statistic built on them
    that reproduces the ``tilde`` serial-over statistic.

    Returns ``(sum_specs, quad)`` where ``quad.sum_refs`` is ``0..R^m-1`` in the order of
    ``sum_specs`` (lexicographic tuples).
    """
    null = null or NullModel.uniform()
    R = 2**r_bits
    specs = [
        instantiate_test("tuple_indicator", {"pattern": list(p), "r_bits": r_bits}, null)
        for p in product(range(R), repeat=m)
    ]
    sig = np.array([s.sigma for s in specs])
    c = serial_over_form(R, m) * np.outer(sig, sig)
    vals, vecs = np.linalg.eigh(c)
    keep = vals > tol * vals.max()
    d = (np.sqrt(vals[keep])[:, None] * vecs[:, keep].T)
    quad = QuadSpec(tuple(map(tuple, d)), tuple(range(len(specs))), f"serial_over(r={r_bits},m={m})")
    return specs, quad
