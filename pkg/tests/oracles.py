"""Independent reference implementations used as test oracles.

Everything here is plain Python (loops, itertools, Fractions) and shares no
code with the package, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def t_sum(f, m, mean, sigma, seq):
    k = len(seq) - m + 1
    total = sum(f(tuple(seq[i : i + m])) - mean for i in range(k))
    return total / (sigma * math.sqrt(k))


def t_lb(f, m, n_blocks, mean, sigma, seq):
    L = len(seq) // n_blocks
    out = 0.0
    for k in range(n_blocks):
        block = seq[k * L : (k + 1) * L]
        w = sum(f(tuple(block[j : j + m])) for j in range(L - m + 1))
        out += (w - (L - m + 1) * mean) ** 2
    return out / (L * sigma**2)


def t_sb(classify, L, cells, seq):
    nb = len(seq) // L
    counts = [0] * len(cells)
    for b in range(nb):
        counts[classify(tuple(seq[b * L : (b + 1) * L]))] += 1
    return sum((c - nb * p) ** 2 / (nb * p) for c, p in zip(counts, cells))


def window_moments(f, m, pmf):
    """Exact (mean, sigma^2) of a sliding-window sum's limit, as Fractions when pmf is rational."""
    pmf = [Fraction(p) for p in pmf]
    R = len(pmf)
    mean = sum(
        math.prod(pmf[x] for x in w) * Fraction(f(w)) for w in itertools.product(range(R), repeat=m)
    )
    var = Fraction(0)
    for w in itertools.product(range(R), repeat=2 * m - 1):
        p = math.prod(pmf[x] for x in w)
        a = Fraction(f(w[:m])) - mean
        var += p * a * a
        for i in range(1, m):
            var += 2 * p * a * (Fraction(f(w[i : i + m])) - mean)
    return mean, var


def gf2_rank(rows):
    rows = [list(r) for r in rows]
    rank, cols = 0, len(rows[0]) if rows else 0
    for c in range(cols):
        pivot = next((i for i in range(rank, len(rows)) if rows[i][c]), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i][c]:
                rows[i] = [a ^ b for a, b in zip(rows[i], rows[rank])]
        rank += 1
    return rank


def rank_distribution(V1, V2):
    counts = [0] * (min(V1, V2) + 1)
    for bits in itertools.product((0, 1), repeat=V1 * V2):
        counts[gf2_rank([bits[i * V2 : (i + 1) * V2] for i in range(V1)])] += 1
    total = 2 ** (V1 * V2)
    return [Fraction(c, total) for c in counts]


def permutation_class(block):
    """Lexicographic rank of the ordering pattern of ``block`` among all L! patterns."""
    order = tuple(sorted(range(len(block)), key=lambda i: (block[i], i)))
    return sorted(itertools.permutations(range(len(block)))).index(order)


def f_star(triples, h, window):
    """Stacked window vector; ``triples`` are dicts with python callables and moments."""
    out = []
    for t in triples:
        L = t["L_sb"]
        counts = [0] * len(t["cells"])
        for u in range(h // L):
            counts[t["classify"](tuple(window[u * L : (u + 1) * L]))] += 1
        out += [c / math.sqrt(p) for c, p in zip(counts, t["cells"])]
        for f, m, sigma in ((t["f_lb"], t["m_lb"], t["sigma_lb"]), (t["f_sum"], t["m_sum"], t["sigma_sum"])):
            out.append(sum(f(tuple(window[u : u + m])) for u in range(h)) / sigma)
    return out


def phi_matrix(triples, h, s, pmf):
    """Long-run covariance of h-spaced window vectors by brute-force enumeration."""
    s0 = h + max(max(t["m_sum"], t["m_lb"]) for t in triples) - 1
    lags = (s - 1) // h
    w = h * lags + s0
    R = len(pmf)
    rows = []
    for x in itertools.product(range(R), repeat=w):
        p = math.prod(pmf[v] for v in x)
        rows.append((p, [f_star(triples, h, x[h * i : h * i + s0]) for i in range(lags + 1)]))
    K = len(rows[0][1][0])
    mu = [sum(p * z[0][j] for p, z in rows) for j in range(K)]
    phi = [[0.0] * K for _ in range(K)]
    for p, z in rows:
        for a in range(K):
            za = z[0][a] - mu[a]
            for b in range(K):
                acc = za * (z[0][b] - mu[b])
                for i in range(1, lags + 1):
                    acc += za * (z[i][b] - mu[b]) + (z[i][a] - mu[a]) * (z[0][b] - mu[b])
                phi[a][b] += p * acc
    return phi


def binomial_normal_sup(n, p=0.5):
    """Exact sup-distance between the standardized Binomial(n, p) CDF and the normal CDF."""
    sd = math.sqrt(n * p * (1 - p))
    best, cdf = 0.0, 0.0
    for k in range(n + 1):
        pk = math.exp(math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) + k * math.log(p) + (n - k) * math.log(1 - p))
        phi = 0.5 * math.erfc(-((k - n * p) / sd) / math.sqrt(2))
        best = max(best, abs(cdf - phi))
        cdf += pk
        best = max(best, abs(cdf - phi))
    return best
