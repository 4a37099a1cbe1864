"""Joint asymptotics of a battery: coordinate layout, block sums, covariance and limit sampling.

Coordinates of the stacked window vector are grouped per triple ``q`` as
``K_sb+1`` short-block cells, then the long-block coordinate, then the summing
coordinate.  ``Phi`` is the long-run covariance of the h-spaced window vectors
under H0 and ``G = Phi / (N h)`` is the covariance of each Gaussian block.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import BadParams, IndefiniteEstimate, NotPSD, SequenceTooShort, UnknownStatistic, WindowTooShort
from .model import DEFAULT_CAP, DEFAULT_MC_REPLICATES, ValidatedBattery, _labels, mc_chunks
from .statistics import _data, _finite

PSD_TOL = 1e-8
CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class TripleRange:
    start: int
    K_sb: int

    @property
    def sb(self) -> range:
        return range(self.start, self.start + self.K_sb + 1)

    @property
    def lb(self) -> int:
        return self.start + self.K_sb + 1

    @property
    def sum(self) -> int:
        return self.start + self.K_sb + 2

    @property
    def stop(self) -> int:
        return self.start + self.K_sb + 3


@dataclass(frozen=True)
class JointLayout:
    K_star: int
    blocks: tuple[TripleRange, ...]
    s_star_lower: int
    N: int
    s: int
    h: int
    mean: tuple[float, ...]  # E_H0 of every window coordinate

    def coordinate_names(self) -> list[str]:
        names = []
        for q, b in enumerate(self.blocks):
            names += [f"sb[{q}].cell{j}" for j in range(b.K_sb + 1)] + [f"lb[{q}]", f"sum[{q}]"]
        return names


def build_layout(battery: ValidatedBattery) -> JointLayout:
    blocks, start, mean = [], 0, []
    h = battery.h
    for t in battery.triples:
        blocks.append(TripleRange(start, t.sb.K))
        start += t.sb.K + 3
        mean += [(h // t.sb.length) * math.sqrt(p) for p in t.sb.cells]
        mean += [h * t.lb.mean / t.lb.sigma, h * t.sum.mean / t.sum.sigma]
    return JointLayout(start, tuple(blocks), battery.s_star_lower, battery.N, battery.s, h, tuple(mean))


def f_star_batch(battery: ValidatedBattery, windows: np.ndarray, h: int | None = None) -> np.ndarray:
    """Window vector for each row of ``windows`` (shape ``(k, >= h + max m - 1)``)."""
    h = battery.h if h is None else h
    windows = np.asarray(windows)
    k = windows.shape[0]
    out = np.empty((k, 3 * battery.Q + sum(t.sb.K for t in battery.triples)))
    col = 0
    for t in battery.triples:
        L, K = t.sb.length, t.sb.K
        acc = np.zeros((k, K + 1))
        for u in range(h // L):
            lab = _labels(t.sb.classifier(windows[:, u * L : (u + 1) * L]), K)
            acc[np.arange(k), lab] += 1.0
        out[:, col : col + K + 1] = acc / np.sqrt(np.asarray(t.sb.cells))[None, :]
        col += K + 1
        for spec in (t.lb, t.sum):
            s = np.zeros(k)
            for u in range(h):
                s += _finite(spec.f(windows[:, u : u + spec.m]), "window function")
            out[:, col] = s / spec.sigma
            col += 1
    return out


def eval_f_star(layout: JointLayout, battery: ValidatedBattery, window) -> np.ndarray:
    window = np.asarray(window)
    if window.ndim != 1 or window.size < layout.s_star_lower:
        raise WindowTooShort(f"window of length {window.size} is shorter than {layout.s_star_lower}")
    dtype = battery.null.space.window_dtype
    return f_star_batch(battery, window[None, : layout.s_star_lower].astype(dtype))[0]


@dataclass(frozen=True, eq=False)
class BlockSums:
    X: np.ndarray  # (N, K*)
    Y: tuple[np.ndarray, ...]  # per triple, (N_lb, K_sb + 3)


def compute_block_sums(layout: JointLayout, battery: ValidatedBattery, seq) -> BlockSums:
    data, dtype = _data(seq)
    n = data.size
    N, s, h = layout.N, layout.s, layout.h
    if n < N * s:
        raise SequenceTooShort(f"n = {n} is below N*s = {N * s}")
    L = n // N
    s0 = layout.s_star_lower
    mu = np.asarray(layout.mean)
    X = np.zeros((N, layout.K_star))
    offsets = np.arange(s0)
    for k in range(1, N + 1):
        lo = -(-L * (k - 1) // h)
        hi = (L * k - s) // h
        if hi < lo:
            continue
        starts = h * np.arange(lo, hi + 1)
        total = np.zeros(layout.K_star)
        for a in range(0, starts.size, 1 << 14):
            st = starts[a : a + (1 << 14)]
            win = np.asarray(data[st[:, None] + offsets[None, :]], dtype=dtype)
            total += np.sum(f_star_batch(battery, win) - mu, axis=0)
        X[k - 1] = total / math.sqrt(n)
    Y = []
    for b, t in zip(layout.blocks, battery.triples):
        per = N // t.lb.n_blocks
        Y.append(X[:, b.start : b.stop].reshape(t.lb.n_blocks, per, -1).sum(axis=1))
    return BlockSums(X, tuple(Y))


def block_statistics(layout: JointLayout, battery: ValidatedBattery, sums: BlockSums) -> np.ndarray:
    """Linear/quadratic forms of the block sums that approximate each statistic."""
    out = []
    for t, Y in zip(battery.triples, sums.Y):
        K = t.sb.K
        out += [
            float(np.sum(Y[:, K + 2])),
            t.lb.n_blocks * float(np.sum(Y[:, K + 1] ** 2)),
            t.sb.length * float(np.sum(np.sum(Y[:, : K + 1], axis=0) ** 2)),
        ]
    sums_ = out[0::3]
    for quad in battery.quads:
        rows = np.asarray(quad.d) @ np.asarray([sums_[r] for r in quad.sum_refs])
        out.append(float(np.sum(rows**2)))
    return np.asarray(out)


# --------------------------------------------------------------------------- Phi and G


@dataclass(frozen=True, eq=False)
class PhiMatrix:
    matrix: np.ndarray
    se: np.ndarray  # entrywise standard errors (0 where exact)
    method: str
    samples: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class GMatrix:
    matrix: np.ndarray
    se: np.ndarray
    N: int
    h: int
    method: str
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _lags(layout: JointLayout) -> int:
    """Number of cross-window lags with possibly nonzero covariance."""
    p = (layout.s - 1) // layout.h
    return min(p, (layout.s_star_lower - 1) // layout.h)


def _within_group_mask(layout: JointLayout) -> np.ndarray:
    mask = np.zeros((layout.K_star, layout.K_star), dtype=bool)
    for b in layout.blocks:
        mask[b.start : b.lb, b.start : b.lb] = True
        mask[b.lb, b.lb] = True
        mask[b.sum, b.sum] = True
    return mask


def _phi_exact(battery, layout, h, lags, cap):
    s0 = h + max(max(t.sum.m, t.lb.m) for t in battery.triples) - 1
    w = h * lags + s0
    mu = f_star_mean(battery, h)
    K = layout.K_star
    acc = np.zeros((lags + 1, K, K))
    for windows, probs in battery.null.enumerate_windows(w, cap):
        Z = [f_star_batch(battery, windows[:, h * i : h * i + s0], h) - mu for i in range(lags + 1)]
        pz = probs[:, None] * Z[0]
        for i in range(lags + 1):
            acc[i] += pz.T @ Z[i]
    phi = acc[0] + sum(acc[i] + acc[i].T for i in range(1, lags + 1))
    return (phi + phi.T) / 2.0, battery.null.space.R**w


def _phi_mc(battery, layout, h, lags, M, seed):
    s0 = h + max(max(t.sum.m, t.lb.m) for t in battery.triples) - 1
    w = h * lags + s0
    mu = f_star_mean(battery, h)
    K = layout.K_star
    chunk = max(256, min(1 << 16, (1 << 22) // (K * K)))
    s1 = np.zeros((K, K))
    s2 = np.zeros((K, K))
    for _, size, rng in mc_chunks(seed, M, chunk):
        win = battery.null.sample(rng, (size, w))
        Z = [f_star_batch(battery, win[:, h * i : h * i + s0], h) - mu for i in range(lags + 1)]
        g = Z[0][:, :, None] * Z[0][:, None, :]
        for i in range(1, lags + 1):
            c = Z[0][:, :, None] * Z[i][:, None, :]
            g += c + np.swapaxes(c, 1, 2)
        s1 += g.sum(axis=0)
        s2 += (g * g).sum(axis=0)
    mean = s1 / M
    var = np.maximum(s2 / M - mean**2, 0.0) * M / max(M - 1, 1)
    return (mean + mean.T) / 2.0, np.sqrt(var / M)


def f_star_mean(battery: ValidatedBattery, h: int | None = None) -> np.ndarray:
    h = battery.h if h is None else h
    mean = []
    for t in battery.triples:
        mean += [(h // t.sb.length) * math.sqrt(p) for p in t.sb.cells]
        mean += [h * t.lb.mean / t.lb.sigma, h * t.sum.mean / t.sum.sigma]
    return np.asarray(mean)


def closed_form_blocks(layout: JointLayout, battery: ValidatedBattery) -> np.ndarray:
    """Analytic within-group entries for m_sum = m_lb = 1, s = h (zeros elsewhere)."""
    h = layout.h
    phi = np.zeros((layout.K_star, layout.K_star))
    for b, t in zip(layout.blocks, battery.triples):
        r = np.sqrt(np.asarray(t.sb.cells))
        phi[b.start : b.lb, b.start : b.lb] = (h / t.sb.length) * (np.eye(t.sb.K + 1) - np.outer(r, r))
        phi[b.lb, b.lb] = h
        phi[b.sum, b.sum] = h
    return phi


def estimate_phi(
    layout: JointLayout,
    battery: ValidatedBattery,
    method: str = "exact_enumeration",
    *,
    M: int = DEFAULT_MC_REPLICATES,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    psd_tol: float = PSD_TOL,
) -> PhiMatrix:
    """Long-run covariance of the h-spaced window vectors under H0."""
    h, K = layout.h, layout.K_star
    lags = _lags(layout)
    meta = {"lags": lags, "s": layout.s, "h": h}
    if method == "exact_enumeration":
        phi, count = _phi_exact(battery, layout, h, lags, cap)
        se = np.zeros((K, K))
        samples = count
    elif method == "monte_carlo":
        phi, se = _phi_mc(battery, layout, h, lags, M, seed)
        samples = M
        meta["seed"] = seed
    elif method == "closed_form":
        if layout.s != h or any(t.sum.m != 1 or t.lb.m != 1 for t in battery.triples):
            raise BadParams("closed_form needs s = h and window length 1 for every sum/lb function")
        # h-blocks split into iid sub-blocks of length lcm(L_sb); cross entries come from one sub-block
        sub = reduce(math.lcm, (t.sb.length for t in battery.triples), 1)
        scale = h / sub
        if battery.null.is_finite:
            cross, samples = _phi_exact(battery, layout, sub, 0, cap)
            cross_se = np.zeros((K, K))
            meta["cross_method"] = "exact_enumeration"
        else:
            cross, cross_se = _phi_mc(battery, layout, sub, 0, M, seed)
            samples = M
            meta.update(cross_method="monte_carlo", seed=seed)
        mask = _within_group_mask(layout)
        phi = np.where(mask, closed_form_blocks(layout, battery), scale * cross)
        se = np.where(mask, 0.0, scale * cross_se)
        meta["sub_block"] = sub
    else:
        raise BadParams(f"unknown Phi method {method!r}")
    phi = (phi + phi.T) / 2.0
    se = (se + se.T) / 2.0
    vals, vecs = np.linalg.eigh(phi)
    lmax = max(vals.max(), 0.0)
    if vals.min() < -psd_tol * lmax:
        raise IndefiniteEstimate(
            f"Phi has eigenvalue {vals.min():.3g} below -{psd_tol:g} * {lmax:.3g}; "
            "moments are inconsistent or M is too small"
        )
    projected = False
    if vals.min() < -1e-12 * lmax:
        phi = (vecs * np.maximum(vals, 0.0)) @ vecs.T
        phi = (phi + phi.T) / 2.0
        projected = True
    meta["psd_projected"] = projected
    meta["min_eigenvalue"] = float(vals.min())
    return PhiMatrix(phi, se, method, int(samples), meta)


def compute_G(phi: PhiMatrix, N: int, h: int) -> GMatrix:
    scale = N * h
    return GMatrix(phi.matrix / scale, phi.se / scale, int(N), int(h), phi.method, dict(phi.meta, samples=phi.samples))


# --------------------------------------------------------------------------- limit sampling


@dataclass(frozen=True, eq=False)
class LimitSampleSet:
    draws: np.ndarray  # (M_lim, 3Q + J)
    labels: tuple[str, ...]
    seed: int

    def __eq__(self, other):
        return (
            isinstance(other, LimitSampleSet)
            and self.labels == other.labels
            and self.seed == other.seed
            and np.array_equal(self.draws, other.draws)
        )


def gaussian_factor(cov: np.ndarray, psd_tol: float = PSD_TOL, clamp_tol: float = CLAMP_TOL) -> np.ndarray:
    """A with A A^T = cov, via symmetric eigendecomposition with small eigenvalues clamped."""
    cov = (np.asarray(cov) + np.asarray(cov).T) / 2.0
    vals, vecs = np.linalg.eigh(cov)
    lmax = max(vals.max(), 0.0)
    if vals.min() < -psd_tol * lmax:
        raise NotPSD(f"covariance has eigenvalue {vals.min():.3g} below -{psd_tol:g} * {lmax:.3g}")
    vals = np.where(vals < clamp_tol * lmax, 0.0, vals)
    return vecs * np.sqrt(vals)


def limit_values(eta: np.ndarray, layout: JointLayout, battery: ValidatedBattery) -> np.ndarray:
    """Map Gaussian blocks ``eta`` (shape ``(M, N, K*)``) to the limit statistic vector."""
    M = eta.shape[0]
    out = np.empty((M, 3 * battery.Q + battery.J))
    for q, (b, t) in enumerate(zip(layout.blocks, battery.triples)):
        n_lb = t.lb.n_blocks
        zeta = eta[:, :, b.start : b.stop].reshape(M, n_lb, layout.N // n_lb, -1).sum(axis=2)
        K = t.sb.K
        out[:, 3 * q] = zeta[:, :, K + 2].sum(axis=1)
        out[:, 3 * q + 1] = n_lb * np.sum(zeta[:, :, K + 1] ** 2, axis=1)
        out[:, 3 * q + 2] = t.sb.length * np.sum(zeta[:, :, : K + 1].sum(axis=1) ** 2, axis=1)
    for j, quad in enumerate(battery.quads):
        sums = out[:, [3 * r for r in quad.sum_refs]]
        rows = sums @ np.asarray(quad.d).T
        out[:, 3 * battery.Q + j] = np.sum(rows**2, axis=1)
    return out


def _limit_chunk(args):
    A, layout, battery, seed, c, size = args
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(c,)))
    z = rng.standard_normal((size, layout.N, layout.K_star))
    return limit_values(z @ A.T, layout, battery)


def sample_limit(
    g: GMatrix,
    layout: JointLayout,
    battery: ValidatedBattery,
    M_lim: int,
    seed: int = 0,
    *,
    workers: int = 1,
    chunk: int = 4096,
) -> LimitSampleSet:
    """Draws of the limit joint law: eta_1..eta_N iid N(0, G), then the battery's forms."""
    if M_lim < 1:
        raise BadParams("M_lim must be positive")
    A = gaussian_factor(g.matrix)
    jobs = [(A, layout, battery, seed, c, min(chunk, M_lim - a)) for c, a in enumerate(range(0, M_lim, chunk))]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_limit_chunk, jobs))
    else:
        parts = [_limit_chunk(j) for j in jobs]
    return LimitSampleSet(np.concatenate(parts), battery.labels(), seed)


# --------------------------------------------------------------------------- independence

_REF = re.compile(r"^\s*(?:T_)?(sum|lb|sb|quad)\s*\[\s*(\d+)\s*\]\s*$")


def parse_ref(ref) -> tuple[str, int]:
    if isinstance(ref, tuple) and len(ref) == 2:
        kind, idx = ref
    else:
        m = _REF.match(str(ref))
        if not m:
            raise UnknownStatistic(f"cannot parse statistic reference {ref!r}")
        kind, idx = m.group(1), int(m.group(2))
    if kind not in ("sum", "lb", "sb", "quad"):
        raise UnknownStatistic(f"unknown statistic kind {kind!r}")
    return kind, int(idx)


def alpha_set(layout: JointLayout, ref, battery: ValidatedBattery | None = None) -> frozenset[int]:
    """Window coordinates a statistic depends on."""
    kind, idx = parse_ref(ref)
    if kind == "quad":
        if battery is None or not 0 <= idx < battery.J:
            raise UnknownStatistic(f"no quadratic statistic {idx}")
        quad = battery.quads[idx]
        d = np.asarray(quad.d)
        return frozenset(layout.blocks[r].sum for col, r in enumerate(quad.sum_refs) if np.any(d[:, col] != 0))
    if not 0 <= idx < len(layout.blocks):
        raise UnknownStatistic(f"no triple {idx}")
    b = layout.blocks[idx]
    if kind == "sb":
        return frozenset(b.sb)
    return frozenset([b.lb] if kind == "lb" else [b.sum])


@dataclass(frozen=True)
class IndependenceReport:
    independent: bool
    violations: tuple[tuple[int, int, float], ...]
    pairs: tuple[tuple[int, int, bool], ...]
    note: str = "verdict assumes the Gaussian block limit with covariance G"


def check_independence(
    g: GMatrix,
    layout: JointLayout,
    groups,
    tol=None,
    battery: ValidatedBattery | None = None,
    n_se: float = 5.0,
) -> IndependenceReport:
    """Groups are asymptotically independent iff G vanishes on every cross pair of their coordinates.

    ``tol=None`` uses ``n_se`` standard errors per entry (0 for exactly computed entries).
    """
    alphas = [sorted(set().union(*(alpha_set(layout, r, battery) for r in grp))) for grp in groups]
    G = g.matrix
    tol_m = n_se * g.se if tol is None else np.full_like(G, float(tol))
    violations, pairs = set(), []
    for i in range(len(alphas)):
        for j in range(i + 1, len(alphas)):
            ok = True
            for u in alphas[i]:
                for v in alphas[j]:
                    if abs(G[u, v]) > tol_m[u, v]:
                        ok = False
                        violations.add((min(u, v), max(u, v), float(G[u, v])))
            pairs.append((i, j, ok))
    return IndependenceReport(not violations, tuple(sorted(violations)), tuple(pairs))
