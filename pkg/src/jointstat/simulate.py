"""Sequence generators, the Monte-Carlo runner and the empirical checks built on it.

Replica ``r`` of a run with master seed ``S`` is drawn from
``SeedSequence(S, spawn_key=(r,))``, so every replica is the same no matter
how replicas are scheduled across workers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import gof
from .errors import BadParams, DimensionMismatch, EvaluationError, JointStatError, TooFewReplicas
from .joint import GMatrix, JointLayout, LimitSampleSet, build_layout, compute_block_sums
from .model import NullModel, ValidatedBattery
from .statistics import Sequence, eval_battery

# --------------------------------------------------------------------------- generators


@dataclass(frozen=True)
class Generator:
    kind: str  # h0 | bernoulli | markov_binary | uniform01
    null: NullModel | None = None
    p: float = 0.5
    transition: tuple[tuple[float, float], tuple[float, float]] = ((0.5, 0.5), (0.5, 0.5))
    initial: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.kind not in ("h0", "bernoulli", "markov_binary", "uniform01"):
            raise BadParams(f"unknown generator kind {self.kind!r}")
        if self.kind == "h0" and self.null is None:
            raise BadParams("h0 generator needs a null model")
        if not 0.0 <= self.p <= 1.0:
            raise BadParams(f"p must lie in [0, 1], got {self.p}")
        rows = list(self.transition) + [self.initial]
        for row in rows:
            if len(row) != 2 or min(row) < 0 or abs(sum(row) - 1.0) > 1e-12:
                raise BadParams(f"transition rows and initial law must be probability vectors, got {row}")
        object.__setattr__(self, "transition", tuple(tuple(float(v) for v in r) for r in self.transition))
        object.__setattr__(self, "initial", tuple(float(v) for v in self.initial))

    @classmethod
    def h0(cls, null: NullModel) -> "Generator":
        return cls("h0", null=null)

    @classmethod
    def bernoulli(cls, p: float) -> "Generator":
        return cls("bernoulli", p=float(p))

    @classmethod
    def markov_binary(cls, transition, initial=(0.5, 0.5)) -> "Generator":
        return cls("markov_binary", transition=tuple(map(tuple, transition)), initial=tuple(initial))

    @classmethod
    def uniform01(cls) -> "Generator":
        return cls("uniform01")

    @property
    def null_model(self) -> NullModel:
        """Sample space the generator emits into, as a null model over that space."""
        if self.kind == "h0":
            return self.null
        if self.kind == "uniform01":
            return NullModel.uniform()
        return NullModel.bernoulli()


def _markov_chain(rng: np.random.Generator, n: int, transition, initial) -> np.ndarray:
    # Each step either resets the state (both rows send u to the same value) or
    # keeps/flips it; the state is the last reset value xor the flip parity since.
    u = rng.random(n)
    go0 = u < transition[0][1]
    go1 = u < transition[1][1]
    reset = go0 == go1
    reset[0] = True
    value = go0.copy()
    value[0] = u[0] < initial[1]
    flips = (go0 & ~go1).astype(np.int64)
    flips[reset] = 0
    parity = np.cumsum(flips)
    last = np.maximum.accumulate(np.where(reset, np.arange(n), 0))
    return (value[last] ^ ((parity - parity[last]) & 1).astype(bool)).astype(np.uint8)


def generate(gen: Generator, n: int, seed) -> Sequence:
    """``seed`` may be an int or a ``SeedSequence``."""
    if int(n) != n or n < 1:
        raise BadParams(f"n must be a positive integer, got {n!r}")
    n = int(n)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    rng = np.random.default_rng(ss)
    if gen.kind == "h0":
        data = gen.null.sample(rng, n)
    elif gen.kind == "uniform01":
        data = rng.random(n)
    elif gen.kind == "bernoulli":
        data = (rng.random(n) < gen.p).astype(np.uint8)
    else:
        data = _markov_chain(rng, n, gen.transition, gen.initial)
    return Sequence(gen.null_model.space, data)


def replica_seed(master_seed: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(r),))


# --------------------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True, eq=False)
class McReport:
    battery_id: str
    M: int
    labels: tuple[str, ...]
    values: np.ndarray  # (M, 3Q + J)
    master_seed: int
    generator: Generator
    n: int
    block_totals: np.ndarray | None = None  # (M, K*) sums over k of the block vectors
    runtime: float = field(default=0.0, compare=False)

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]

    def correlations(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.corrcoef(self.values, rowvar=False)

    def __eq__(self, other):
        return (
            isinstance(other, McReport)
            and (self.battery_id, self.M, self.labels, self.master_seed, self.generator, self.n)
            == (other.battery_id, other.M, other.labels, other.master_seed, other.generator, other.n)
            and np.array_equal(self.values, other.values)
            and (
                (self.block_totals is None and other.block_totals is None)
                or (
                    self.block_totals is not None
                    and other.block_totals is not None
                    and np.array_equal(self.block_totals, other.block_totals)
                )
            )
        )


def battery_id(battery: ValidatedBattery) -> str:
    names = []
    for t in battery.triples:
        names.append(f"{t.sum.name or 'sum'}|{t.lb.name or 'lb'}|{t.sb.name or 'sb'}")
    names += [q.name or "quad" for q in battery.quads]
    c = battery.config
    return f"{';'.join(names)}@N={c.N},h={c.h},s={c.s},n={c.n}"


def _replicas(args):
    battery, layout, gen, master_seed, lo, hi = args
    vals, blocks = [], []
    for r in range(lo, hi):
        seq = generate(gen, battery.n, replica_seed(master_seed, r))
        try:
            vals.append(eval_battery(battery, seq).as_array())
            if layout is not None:
                blocks.append(compute_block_sums(layout, battery, seq).X.sum(axis=0))
        except JointStatError as exc:
            err = EvaluationError(str(exc), replica=r)
            err.label = getattr(exc, "label", None)
            raise err from exc
    return np.asarray(vals), (np.asarray(blocks) if layout is not None else None)


def run_monte_carlo(
    battery: ValidatedBattery,
    gen: Generator,
    M: int,
    master_seed: int = 0,
    *,
    workers: int = 1,
    collect_blocks: bool = False,
    chunk: int = 50,
) -> McReport:
    """Evaluate the battery on ``M`` generated sequences of length ``battery.n``."""
    if int(M) != M or M < 1:
        raise BadParams(f"M must be a positive integer, got {M!r}")
    M = int(M)
    t0 = time.perf_counter()
    layout = build_layout(battery) if collect_blocks else None
    jobs = [(battery, layout, gen, master_seed, a, min(M, a + chunk)) for a in range(0, M, chunk)]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_replicas, jobs))
    else:
        parts = [_replicas(j) for j in jobs]
    values = np.concatenate([p[0] for p in parts])
    blocks = np.concatenate([p[1] for p in parts]) if collect_blocks else None
    return McReport(
        battery_id(battery),
        M,
        battery.labels(),
        values,
        int(master_seed),
        gen,
        battery.n,
        blocks,
        time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------- goodness of fit


@dataclass(frozen=True)
class GofResult:
    label: str
    reference: str
    distance: float
    p_value: float


def marginal_reference(battery: ValidatedBattery, label: str):
    """(description, cdf) of the limit marginal for a sum/lb/sb label; None for quads."""
    kind, q = label.split("[")
    q = int(q.rstrip("]"))
    if kind == "sum":
        return "N(0,1)", gof.normal_cdf
    if kind == "lb":
        df = battery.triples[q].lb.n_blocks
    elif kind == "sb":
        df = battery.triples[q].sb.K
    else:
        return None
    return f"chi2({df})", lambda x, df=df: gof.chi2_cdf(x, df)


def gof_marginals(report: McReport, battery: ValidatedBattery, limit: LimitSampleSet | None = None) -> dict[str, GofResult]:
    """One-sample KS of each statistic against its limit marginal.

    Quadratic statistics are compared with their limit draws (two-sample KS) and
    skipped when ``limit`` is not given.
    """
    if report.M < 100:
        raise TooFewReplicas(f"goodness of fit needs M >= 100, got {report.M}")
    out = {}
    for i, label in enumerate(report.labels):
        x = report.values[:, i]
        ref = marginal_reference(battery, label)
        if ref is None:
            if limit is None:
                continue
            d, p = gof.ks_2samp(x, limit.draws[:, limit.labels.index(label)])
            out[label] = GofResult(label, "limit sample", d, p)
            continue
        name, cdf = ref
        if name == "chi2(0)":
            # point mass at zero: the statistic is identically 0 when K_sb = 0
            ok = bool(np.all(x == 0))
            out[label] = GofResult(label, name, 0.0 if ok else 1.0, 1.0 if ok else 0.0)
            continue
        d, p = gof.ks_1samp(x, cdf)
        out[label] = GofResult(label, name, d, p)
    return out


@dataclass(frozen=True, eq=False)
class JointComparison:
    ks: dict  # label -> (distance, p)
    energy: float
    cov_diff: np.ndarray | None = None  # empirical cov of block totals minus N G
    cov_se: np.ndarray | None = None


def compare_joint(report: McReport, limit: LimitSampleSet, g: GMatrix | None = None) -> JointComparison:
    if report.labels != limit.labels:
        raise DimensionMismatch("report and limit sample list different statistics")
    if report.M < 1 or limit.draws.shape[0] < 1:
        raise DimensionMismatch("both samples must be nonempty")
    ks = {lab: gof.ks_2samp(report.values[:, i], limit.draws[:, i]) for i, lab in enumerate(report.labels)}
    energy = gof.energy_distance(report.values, limit.draws)
    cov_diff = cov_se = None
    if g is not None and report.block_totals is not None:
        B = report.block_totals
        if B.shape[1] != g.dim:
            raise DimensionMismatch(f"block totals have {B.shape[1]} coordinates, G has {g.dim}")
        c = B - B.mean(axis=0)
        prod = c[:, :, None] * c[:, None, :]
        emp = prod.mean(axis=0) * B.shape[0] / max(B.shape[0] - 1, 1)
        cov_diff = emp - g.N * g.matrix
        cov_se = prod.std(axis=0, ddof=1) / math.sqrt(B.shape[0]) if B.shape[0] > 1 else np.full_like(emp, np.inf)
    return JointComparison(ks, energy, cov_diff, cov_se)


# --------------------------------------------------------------------------- divergence


@dataclass(frozen=True, eq=False)
class DivergenceProbe:
    n_grid: tuple[int, ...]
    labels: tuple[str, ...]
    medians: np.ndarray  # (len(grid), 3Q + J)
    abs_sum_medians: np.ndarray  # (len(grid), Q) medians of |T_sum|
    drift: tuple[float, ...]  # per triple: a in median(T_sum) ~ a sqrt(n)
    increasing: dict  # label -> medians strictly increasing along the grid
    x_limits: np.ndarray  # (N, K*) mean of X*/sqrt(n) at the largest n
    c_sum: tuple[float, ...]
    c_lb: tuple[float, ...]
    c_sb: tuple[float, ...]


def lemma_coefficients(x: np.ndarray, layout: JointLayout, battery: ValidatedBattery):
    """(c_sum, c_lb, c_sb) per triple from block limits ``x`` of shape (N, K*)."""
    cs, cl, cb = [], [], []
    for b, t in zip(layout.blocks, battery.triples):
        y = x[:, b.start : b.stop].reshape(t.lb.n_blocks, layout.N // t.lb.n_blocks, -1).sum(axis=1)
        K = t.sb.K
        cs.append(float(y[:, K + 2].sum()))
        cl.append(float(np.sum(y[:, K + 1] ** 2)))
        cb.append(float(np.sum(y[:, : K + 1].sum(axis=0) ** 2)))
    return tuple(cs), tuple(cl), tuple(cb)


def divergence_probe(
    battery: ValidatedBattery,
    gen_alt: Generator,
    n_grid,
    M: int,
    seed: int = 0,
    *,
    workers: int = 1,
) -> DivergenceProbe:
    """Track medians of every statistic along a grid of n under a fixed alternative."""
    grid = tuple(int(n) for n in n_grid)
    if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise BadParams("n_grid needs at least 3 strictly increasing values")
    meds, abs_meds = [], []
    last_blocks = None
    layout = None
    for n in grid:
        bat = battery.with_n(n)
        collect = n == grid[-1]
        rep = run_monte_carlo(bat, gen_alt, M, seed, workers=workers, collect_blocks=False)
        meds.append(np.median(rep.values, axis=0))
        abs_meds.append(np.median(np.abs(rep.values[:, 0 : 3 * bat.Q : 3]), axis=0))
        if collect:
            layout = build_layout(bat)
            xs = [
                compute_block_sums(layout, bat, generate(gen_alt, n, replica_seed(seed, r))).X
                for r in range(min(M, 200))
            ]
            last_blocks = np.mean(xs, axis=0) / math.sqrt(n)
    meds = np.asarray(meds)
    root = np.sqrt(np.asarray(grid, dtype=float))
    drift = tuple(float(meds[:, 3 * q] @ root / (root @ root)) for q in range(battery.Q))
    labels = battery.labels()
    increasing = {lab: bool(np.all(np.diff(meds[:, i]) > 0)) for i, lab in enumerate(labels)}
    c_sum, c_lb, c_sb = lemma_coefficients(last_blocks, layout, battery)
    return DivergenceProbe(grid, labels, meds, np.asarray(abs_meds), drift, increasing, last_blocks, c_sum, c_lb, c_sb)


# --------------------------------------------------------------------------- convergence rate


@dataclass(frozen=True, eq=False)
class ConvergenceRate:
    n_grid: tuple[int, ...]
    labels: tuple[str, ...]
    distances: np.ndarray  # (len(grid), 3Q + J)
    slopes: dict  # label -> fitted slope of log distance on log n


def convergence_rate(
    battery: ValidatedBattery,
    n_grid,
    M: int,
    seed: int = 0,
    *,
    limit: LimitSampleSet,
    workers: int = 1,
) -> ConvergenceRate:
    """Sup-distance between each statistic's empirical CDF and its limit-sample CDF, per n."""
    grid = tuple(int(n) for n in n_grid)
    if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise BadParams("n_grid needs at least 3 strictly increasing values")
    if M < 100:
        raise TooFewReplicas(f"convergence_rate needs M >= 100, got {M}")
    gen = Generator.h0(battery.null)
    rows = []
    for n in grid:
        rep = run_monte_carlo(battery.with_n(n), gen, M, seed, workers=workers)
        rows.append([gof.sup_distance(rep.values[:, i], limit.draws[:, i]) for i in range(len(rep.labels))])
    dist = np.asarray(rows)
    logn = np.log(np.asarray(grid, dtype=float))
    slopes = {}
    for i, lab in enumerate(battery.labels()):
        d = dist[:, i]
        slopes[lab] = float(np.polyfit(logn, np.log(d), 1)[0]) if np.all(d > 0) else float("nan")
    return ConvergenceRate(grid, battery.labels(), dist, slopes)
