"""Rank-sum and exact tests, agreement fractions, and cross-metric rank tables."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

EXACT_MAX_N = 20
TIE_TOL = 1e-12


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    statistic: float
    p_value: float
    method: str
    n1: int
    n2: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "n1": self.n1,
            "n2": self.n2,
            "degenerate": self.degenerate,
        }


def _rank_sum_distribution(doubled_ranks: np.ndarray, n1: int) -> dict[int, int]:
    """Counts of every achievable (doubled) rank sum over all C(N, n1) subsets."""
    # table[j] maps sum -> number of size-j subsets reaching it
    table: list[dict[int, int]] = [{0: 1}] + [{} for _ in range(n1)]
    for r in doubled_ranks:
        r = int(r)
        for j in range(min(n1, len(doubled_ranks)), 0, -1):
            src = table[j - 1]
            if not src:
                continue
            dst = table[j]
            for s, c in src.items():
                dst[s + r] = dst.get(s + r, 0) + c
    return table[n1]


def wilcoxon_rank_sum(x: Sequence[float], y: Sequence[float], method: str = "auto") -> TestResult:
    """Two-sided rank-sum test on mid-ranks.

    Exact permutation p-value when n1 + n2 <= 20 (ties handled by enumerating
    the mid-rank multiset), else a normal approximation with tie-corrected
    variance and continuity correction. ``method`` ("exact" or "normal")
    forces one path. ``statistic`` is the rank sum of x.
    """
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"method: {method!r} not in ('auto', 'exact', 'normal')")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise ValueError("wilcoxon_rank_sum: both samples must be nonempty")
    n = n1 + n2
    ranks = rankdata(np.concatenate([x, y]), method="average")
    w = float(ranks[:n1].sum())
    expected = n1 * (n + 1) / 2.0
    if method == "exact" or (method == "auto" and n <= EXACT_MAX_N):
        doubled = np.rint(2 * ranks).astype(np.int64)
        dist = _rank_sum_distribution(doubled, n1)
        total = math.comb(n, n1)
        obs = abs(int(round(2 * w)) - 2 * expected)
        # doubled sums are integers, so exact comparison is safe
        extreme = sum(c for s, c in dist.items() if abs(s - 2 * expected) >= obs - 1e-9)
        return TestResult(w, min(1.0, extreme / total), "exact", n1, n2)
    _, counts = np.unique(ranks, return_counts=True)
    tie = float(np.sum(counts**3 - counts))
    var = n1 * n2 / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return TestResult(w, 1.0, "normal-approximation", n1, n2)
    z = max(abs(w - expected) - 0.5, 0.0) / math.sqrt(var)
    p = math.erfc(z / math.sqrt(2.0))
    return TestResult(w, min(1.0, p), "normal-approximation", n1, n2)


def fisher_exact_two_sided(table) -> TestResult:
    """Sum of hypergeometric probabilities no larger than the observed table's.

    Probabilities are compared as exact integers (common denominator C(N, c1)),
    so no floating-point slack is needed. ``statistic`` is the odds ratio.
    """
    t = np.asarray(table)
    if t.shape != (2, 2) or np.any(t < 0) or np.any(t != np.floor(t)):
        raise ValueError("fisher_exact_two_sided: need a 2x2 table of nonnegative integers")
    (a, b), (c, d) = (int(v) for v in t[0]), (int(v) for v in t[1])
    r1, r2, c1 = a + b, c + d, a + c
    n = r1 + r2
    odds = (a * d) / (b * c) if b * c else (math.inf if a * d else math.nan)
    rows_zero = r1 == 0 or r2 == 0
    cols_zero = c1 == 0 or (b + d) == 0
    if n == 0 or (rows_zero and cols_zero):
        return TestResult(odds, 1.0, "exact", r1, r2, degenerate=True)
    lo, hi = max(0, c1 - r2), min(r1, c1)
    weights = {k: math.comb(r1, k) * math.comb(r2, c1 - k) for k in range(lo, hi + 1)}
    obs = weights[a]
    p = sum(w for w in weights.values() if w <= obs) / math.comb(n, c1)
    return TestResult(odds, min(1.0, p), "exact", r1, r2)


def preference_sign(diff: float, tol: float = TIE_TOL) -> int:
    return 0 if abs(diff) <= tol else (1 if diff > 0 else -1)


def agreement_fraction(labels_a: Sequence, labels_b: Sequence) -> float:
    """Fraction of positions where the two label lists match.

    Labels are compared for equality, so a tie (0) agrees only with a tie.
    Pass ``preference_sign`` values to compare score differences.
    """
    if len(labels_a) != len(labels_b):
        raise ValueError(f"agreement_fraction: length mismatch {len(labels_a)} vs {len(labels_b)}")
    if len(labels_a) == 0:
        raise ValueError("agreement_fraction: need at least one label")
    return sum(1 for a, b in zip(labels_a, labels_b) if a == b) / len(labels_a)


class MissingCellError(KeyError):
    def __init__(self, cells):
        self.cells = list(cells)
        super().__init__(f"missing (generator, metric) cells: {self.cells}")


@dataclass
class RankTable:
    generators: list[str]
    metrics: list[str]
    rankings: dict[str, list[str]]  # metric -> generators best-first
    ranks: dict[str, dict[str, float]]  # metric -> generator -> rank (1 = best, ties averaged)
    kendall_tau: dict[str, float] = field(default_factory=dict)  # "A|B" -> tau
    winners: dict[str, list[str]] = field(default_factory=dict)
    unanimous_winner: str | None = None

    def to_dict(self) -> dict:
        return {
            "generators": self.generators,
            "metrics": self.metrics,
            "rankings": self.rankings,
            "ranks": self.ranks,
            "kendall_tau": self.kendall_tau,
            "winners": self.winners,
            "unanimous_winner": self.unanimous_winner,
        }


def kendall_tau_b(a: Sequence[float], b: Sequence[float]) -> float:
    """Tau-b over paired ranks; nan when either side is constant."""
    conc = disc = ties_a = ties_b = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        da = preference_sign(a[i] - a[j])
        db = preference_sign(b[i] - b[j])
        if da == 0 and db == 0:
            continue
        if da == 0:
            ties_a += 1
        elif db == 0:
            ties_b += 1
        elif da == db:
            conc += 1
        else:
            disc += 1
    denom = math.sqrt((conc + disc + ties_a) * (conc + disc + ties_b))
    return (conc - disc) / denom if denom else math.nan


def _score(cell) -> tuple[float, str]:
    if hasattr(cell, "mean"):
        return float(cell.mean), cell.better
    return float(cell["mean"]), cell["better"]


def rank_table(results: Mapping[str, Mapping[str, object]]) -> RankTable:
    """Rank generators under every metric using each metric's better-direction.

    ``results`` maps generator -> metric -> MetricResult (or a dict with
    ``mean`` and ``better``). Scores within 1e-12 share an averaged rank.
    """
    gens = list(results)
    metrics: list[str] = []
    for g in gens:
        for m in results[g]:
            if m not in metrics:
                metrics.append(m)
    missing = [(g, m) for g in gens for m in metrics if m not in results[g]]
    if missing:
        raise MissingCellError(missing)
    rankings, ranks, winners = {}, {}, {}
    for m in metrics:
        scores = {}
        better = "lower"
        for g in gens:
            s, better = _score(results[g][m])
            scores[g] = s if better == "lower" else -s
        r = {}
        for g in gens:
            below = sum(1 for h in gens if scores[h] < scores[g] - TIE_TOL)
            tied = sum(1 for h in gens if abs(scores[h] - scores[g]) <= TIE_TOL)
            r[g] = below + (tied + 1) / 2.0
        ranks[m] = r
        rankings[m] = sorted(gens, key=lambda g: (r[g], gens.index(g)))
        winners[m] = [g for g in gens if r[g] == min(r.values())]
    taus = {}
    if len(gens) > 1:
        for m1, m2 in itertools.combinations(metrics, 2):
            tau = kendall_tau_b([ranks[m1][g] for g in gens], [ranks[m2][g] for g in gens])
            if not math.isnan(tau):
                taus[f"{m1}|{m2}"] = tau
    first = winners[metrics[0]] if metrics else []
    unanimous = (
        first[0] if len(first) == 1 and all(winners[m] == first for m in metrics) else None
    )
    return RankTable(gens, metrics, rankings, ranks, taus, winners, unanimous)
