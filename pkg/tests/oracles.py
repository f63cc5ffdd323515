"""Slow, obviously-correct reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def mmd2_loops(X, S, sigma):
    def k(u, v):
        return math.exp(-sum((a - b) ** 2 for a, b in zip(u, v)) / (2 * sigma * sigma))

    X, S = [list(map(float, r)) for r in np.atleast_2d(X)], [list(map(float, r)) for r in np.atleast_2d(S)]
    # exact summation, so the oracle's own rounding is negligible
    n, m = len(X), len(S)
    terms = [k(a, b) / n**2 for a in X for b in X]
    terms += [k(a, b) / m**2 for a in S for b in S]
    terms += [-2 * k(a, b) / (n * m) for a in X for b in S]
    return math.fsum(terms)


def rank_sum_p_enumerate(x, y):
    """Two-sided exact rank-sum p by enumerating every relabelling."""
    pooled = list(x) + list(y)
    n, n1 = len(pooled), len(x)
    order = sorted(range(n), key=lambda i: pooled[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        for t in range(i, j + 1):
            ranks[order[t]] = (i + j) / 2 + 1
        i = j + 1
    expected = n1 * (n + 1) / 2
    obs = abs(sum(ranks[:n1]) - expected)
    hits = total = 0
    for combo in itertools.combinations(range(n), n1):
        total += 1
        hits += abs(sum(ranks[c] for c in combo) - expected) >= obs - 1e-9
    return hits / total


def fisher_p_enumerate(table):
    """Two-sided Fisher p from the hypergeometric pmf in exact fractions."""
    from fractions import Fraction

    (a, b), (c, d) = table
    r1, r2, c1 = a + b, c + d, a + c
    n = r1 + r2

    def pmf(k):
        return Fraction(math.comb(r1, k) * math.comb(r2, c1 - k), math.comb(n, c1))

    obs = pmf(a)
    ks = range(max(0, c1 - r2), min(r1, c1) + 1)
    return float(sum(pmf(k) for k in ks if pmf(k) <= obs))


def fid_1d(m1, v1, m2, v2):
    return (m1 - m2) ** 2 + v1 + v2 - 2 * math.sqrt(v1 * v2)
