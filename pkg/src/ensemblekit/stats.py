"""Friedman test, Nemenyi post-hoc comparison and group letters.

Ranks run so that the best method on a dataset gets rank k; a larger rank
sum is better. Ties get midranks.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .core import ValidationError

__all__ = [
    "RankTable",
    "rank_table",
    "friedman",
    "iman_davenport",
    "NemenyiResult",
    "nemenyi",
    "range_sf",
    "group_letters",
    "Q_CRIT",
]

# Critical values of the studentized range (infinite df) divided by sqrt(2),
# indexed by number of methods k = 2..20.
Q_CRIT = {
    0.05: {
        2: 1.959964, 3: 2.343701, 4: 2.569032, 5: 2.727774, 6: 2.849705,
        7: 2.948320, 8: 3.030878, 9: 3.101730, 10: 3.163684, 11: 3.218654,
        12: 3.268004, 13: 3.312739, 14: 3.353618, 15: 3.391230, 16: 3.426041,
        17: 3.458425, 18: 3.488685, 19: 3.517073, 20: 3.543799,
    },
    0.10: {
        2: 1.644854, 3: 2.052293, 4: 2.291341, 5: 2.459516, 6: 2.588521,
        7: 2.692732, 8: 2.779884, 9: 2.854606, 10: 2.919889, 11: 2.977768,
        12: 3.029694, 13: 3.076733, 14: 3.119693, 15: 3.159199, 16: 3.195743,
        17: 3.229723, 18: 3.261461, 19: 3.291224, 20: 3.319233,
    },
}


@dataclass(frozen=True)
class RankTable:
    methods: tuple[str, ...]
    datasets: tuple[str, ...]
    performance: np.ndarray  # methods x datasets
    ranks: np.ndarray  # methods x datasets, k = best

    @property
    def rank_sums(self) -> np.ndarray:
        return self.ranks.sum(axis=1)

    @property
    def mean_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=1)

    @property
    def k(self) -> int:
        return self.ranks.shape[0]

    @property
    def n(self) -> int:
        return self.ranks.shape[1]


def rank_table(perf, methods=None, datasets=None) -> RankTable:
    perf = np.asarray(perf, dtype=np.float64)
    if perf.ndim != 2 or perf.shape[0] < 2 or perf.shape[1] < 2:
        raise ValidationError("need at least 2 methods and 2 datasets")
    if not np.all(np.isfinite(perf)):
        raise ValidationError("performance values must be finite")
    k, n = perf.shape
    methods = tuple(methods) if methods is not None else tuple(f"m{i}" for i in range(k))
    datasets = tuple(datasets) if datasets is not None else tuple(f"d{j}" for j in range(n))
    ranks = np.column_stack([stats.rankdata(perf[:, j]) for j in range(n)])
    return RankTable(methods, datasets, perf, ranks)


def friedman(perf, methods=None, datasets=None):
    """Friedman chi-square statistic and p-value (k - 1 degrees of freedom).

    Returns ``(statistic, p_value, rank_table)``.
    """
    rt = rank_table(perf, methods, datasets)
    k, n = rt.k, rt.n
    stat = 12.0 * n / (k * (k + 1)) * np.sum((rt.mean_ranks - (k + 1) / 2.0) ** 2)
    stat = float(stat)
    p = float(stats.chi2.sf(stat, k - 1))
    return stat, p, rt


def iman_davenport(statistic: float, k: int, n: int):
    """F-distributed correction of the Friedman statistic: ``(F, p)``."""
    denom = n * (k - 1) - statistic
    if denom <= 0:
        return float("inf"), 0.0
    f = (n - 1) * statistic / denom
    return float(f), float(stats.f.sf(f, k - 1, (k - 1) * (n - 1)))


def _range_cdf(w: float, k: int) -> float:
    """P(range of k iid standard normals <= w)."""
    if w <= 0:
        return 0.0

    def integrand(x):
        return stats.norm.pdf(x) * (stats.norm.cdf(x + w) - stats.norm.cdf(x)) ** (k - 1)

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return min(1.0, k * val)


def range_sf(q: float, k: int) -> float:
    """Upper tail of the studentized range with infinite degrees of freedom."""
    if q <= 0:
        return 1.0
    return max(0.0, 1.0 - _range_cdf(q, k))


@dataclass(frozen=True)
class NemenyiResult:
    methods: tuple[str, ...]
    p_values: np.ndarray
    cd: float
    alpha: float

    def significant_pairs(self, alpha: float | None = None):
        alpha = self.alpha if alpha is None else alpha
        k = len(self.methods)
        return [
            (self.methods[i], self.methods[j], float(self.p_values[i, j]))
            for i in range(k) for j in range(i + 1, k)
            if self.p_values[i, j] < alpha
        ]


def nemenyi(rt: RankTable, alpha: float = 0.05) -> NemenyiResult:
    """Pairwise Nemenyi p-values and the critical difference in mean rank."""
    k, n = rt.k, rt.n
    if alpha not in Q_CRIT:
        raise ValidationError(f"alpha must be one of {sorted(Q_CRIT)}")
    if k not in Q_CRIT[alpha]:
        raise ValidationError(f"Nemenyi critical values available for 2 <= k <= 20, got k={k}")
    se = np.sqrt(k * (k + 1) / (6.0 * n))
    cd = Q_CRIT[alpha][k] * se
    mr = rt.mean_ranks
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            z = abs(mr[i] - mr[j]) / se
            p[i, j] = p[j, i] = range_sf(z * np.sqrt(2.0), k)
    return NemenyiResult(rt.methods, p, float(cd), alpha)


def group_letters(rt: RankTable, cd: float) -> dict[str, str]:
    """Letters shared by methods whose mean ranks lie within ``cd``.

    Methods are sorted by rank sum, best first. Each maximal contiguous run
    whose mean-rank spread is below ``cd`` gets the next letter.
    """
    order = sorted(range(rt.k), key=lambda i: (-rt.rank_sums[i], i))
    mr = rt.mean_ranks[order]
    runs: list[tuple[int, int]] = []
    for start in range(len(order)):
        end = start
        while end + 1 < len(order) and mr[start] - mr[end + 1] < cd:
            end += 1
        if not runs or end > runs[-1][1]:
            runs.append((start, end))
    if len(runs) > 26:
        raise ValidationError("more than 26 groups")
    letters = {rt.methods[i]: "" for i in order}
    for letter, (s, e) in zip(string.ascii_lowercase, runs):
        for pos in range(s, e + 1):
            letters[rt.methods[order[pos]]] += letter
    return letters
