"""Evaluation of summing, long-block, short-block and quadratic statistics.

All window passes are chunked: at most ``chunk`` windows are materialised at a
time, so memory beyond the input itself stays bounded for long sequences.
Partial sums are pairwise (numpy) inside a chunk and combined with
``math.fsum`` across chunks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    DimensionMismatch,
    EvaluationError,
    InvalidFunctionOutput,
    JointStatError,
    OutOfRange,
    SequenceTooShort,
)
from .model import LongBlockSpec, QuadSpec, SampleSpace, ShortBlockSpec, SumSpec, ValidatedBattery, _labels

CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class Sequence:
    space: SampleSpace
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 1 or data.size < 1:
            raise SequenceTooShort("a sequence needs at least one element")
        if not self.space.contains(data):
            raise OutOfRange("sequence has elements outside its sample space")
        if data.dtype != self.space.storage_dtype:
            data = data.astype(self.space.storage_dtype)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return int(self.data.size)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other):
        return (
            isinstance(other, Sequence)
            and self.space == other.space
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class StatVector:
    values: tuple[float, ...]
    labels: tuple[str, ...]

    def __len__(self):
        return len(self.values)

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.values[self.labels.index(key)]
        return self.values[key]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def _data(seq) -> tuple[np.ndarray, np.dtype]:
    if isinstance(seq, Sequence):
        return seq.data, seq.space.window_dtype
    data = np.asarray(seq)
    return data, np.dtype(np.float64) if data.dtype.kind == "f" else np.dtype(np.int64)


def _finite(values, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidFunctionOutput(f"{what} returned NaN or inf")
    return values


def window_values(data: np.ndarray, f, m: int, start: int, stop: int, dtype, chunk: int = CHUNK):
    """Yield f evaluated at window starts ``start..stop-1`` (0-based), chunk by chunk."""
    for a in range(start, stop, chunk):
        b = min(stop, a + chunk)
        block = np.asarray(data[a : b + m - 1], dtype=dtype)
        yield _finite(f(sliding_window_view(block, m)), "window function")


def centered_window_sum(data, f, m, start, stop, center, dtype, chunk=CHUNK) -> float:
    return math.fsum(float(np.sum(v - center)) for v in window_values(data, f, m, start, stop, dtype, chunk))


def eval_sum(spec: SumSpec, seq, chunk: int = CHUNK) -> float:
    data, dtype = _data(seq)
    n = data.size
    count = n - spec.m + 1
    if count < 1:
        raise SequenceTooShort(f"n = {n} is shorter than the window m = {spec.m}")
    total = centered_window_sum(data, spec.f, spec.m, 0, count, spec.mean, dtype, chunk)
    return total / (spec.sigma * math.sqrt(count))


def long_block_sums(spec: LongBlockSpec, seq, chunk: int = CHUNK) -> np.ndarray:
    """Centred block sums W_k - (L_lb - m + 1) E_lb, k = 1..N_lb."""
    data, dtype = _data(seq)
    L = data.size // spec.n_blocks
    if L < spec.m:
        raise SequenceTooShort(f"long blocks of length {L} are shorter than the window m = {spec.m}")
    out = np.empty(spec.n_blocks)
    for k in range(spec.n_blocks):
        a = k * L
        out[k] = centered_window_sum(data, spec.f, spec.m, a, a + L - spec.m + 1, spec.mean, dtype, chunk)
    return out


def eval_long_block(spec: LongBlockSpec, seq, chunk: int = CHUNK) -> float:
    data, _ = _data(seq)
    L = data.size // spec.n_blocks
    w = long_block_sums(spec, seq, chunk)
    return math.fsum(w * w) / (L * spec.sigma**2)


def short_block_counts(spec: ShortBlockSpec, seq, chunk: int = CHUNK) -> np.ndarray:
    data, dtype = _data(seq)
    L = spec.length
    n_blocks = data.size // L
    if n_blocks < 1:
        raise SequenceTooShort(f"n = {data.size} is shorter than one short block (L = {L})")
    counts = np.zeros(spec.K + 1, dtype=np.int64)
    step = max(1, chunk // L)
    for a in range(0, n_blocks, step):
        b = min(n_blocks, a + step)
        blocks = np.asarray(data[a * L : b * L], dtype=dtype).reshape(b - a, L)
        counts += np.bincount(_labels(spec.classifier(blocks), spec.K), minlength=spec.K + 1)
    return counts


def eval_short_block(spec: ShortBlockSpec, seq, chunk: int = CHUNK) -> float:
    w = short_block_counts(spec, seq, chunk)
    n_blocks = int(w.sum())
    expected = n_blocks * np.asarray(spec.cells)
    return math.fsum((w - expected) ** 2 / expected)


def eval_quadratic(spec: QuadSpec, sums) -> float:
    sums = np.asarray(sums, dtype=float)
    if sums.shape != (spec.Q,):
        raise DimensionMismatch(f"quadratic statistic expects {spec.Q} summing values, got {sums.shape}")
    rows = np.asarray(spec.d) @ sums
    return math.fsum(rows * rows)


def eval_battery(battery: ValidatedBattery, seq, chunk: int = CHUNK) -> StatVector:
    data, _ = _data(seq)
    if data.size != battery.n:
        raise SequenceTooShort(f"sequence length {data.size} does not match the battery's n = {battery.n}")
    labels = battery.labels()
    values = []
    sums = []
    for q, t in enumerate(battery.triples):
        for label, fn, spec in (
            (labels[3 * q], eval_sum, t.sum),
            (labels[3 * q + 1], eval_long_block, t.lb),
            (labels[3 * q + 2], eval_short_block, t.sb),
        ):
            try:
                values.append(fn(spec, seq, chunk))
            except JointStatError as exc:
                raise EvaluationError(str(exc), label=label) from exc
        sums.append(values[-3])
    for j, quad in enumerate(battery.quads):
        values.append(eval_quadratic(quad, [sums[r] for r in quad.sum_refs]))
    return StatVector(tuple(float(v) for v in values), labels)
