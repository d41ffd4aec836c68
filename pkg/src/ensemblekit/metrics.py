"""Performance, diversity and calibration measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ContingencyTable,
    PredictionMatrix,
    ValidationError,
    require_both_classes,
    validate_labels,
)

__all__ = [
    "auc",
    "brier",
    "threshold_labels",
    "contingency_table",
    "yule_q",
    "cohen_kappa",
    "DiversityStats",
    "pair_diversity",
    "diversity_matrix",
    "correlation_distance",
    "correlation_distance_matrix",
    "mean_pairwise_profile",
]


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks of ``x`` with tied values sharing their average rank."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], xs.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(x.size, dtype=np.float64)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank sum.

    Equals the fraction of (positive, negative) pairs in which the positive
    instance scores higher, ties counting one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = validate_labels(labels, s.shape[0] if s.ndim == 1 else None)
    if s.ndim != 1:
        raise ValidationError("scores must be 1-D")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC undefined: labels contain a single class")
    rank_sum = _midranks(s)[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def brier(scores, labels) -> float:
    """Mean squared difference between probabilities and 0/1 outcomes."""
    f = np.asarray(scores, dtype=np.float64)
    if f.size == 0:
        raise ValidationError("Brier score undefined for empty input")
    o = validate_labels(labels, f.shape[0])
    if np.any((f < 0) | (f > 1)) or not np.all(np.isfinite(f)):
        raise ValidationError("Brier score requires probabilities in [0, 1]")
    return float(np.mean((f - o) ** 2))


def threshold_labels(scores, tau: float = 0.5) -> np.ndarray:
    """1 where ``score > tau`` (strict), else 0."""
    return (np.asarray(scores, dtype=np.float64) > tau).astype(np.int8)


def contingency_table(pred_i, pred_k, labels, tau: float = 0.5) -> ContingencyTable:
    y = validate_labels(labels)
    pi, pk = np.asarray(pred_i), np.asarray(pred_k)
    if pi.shape != pk.shape or pi.shape != y.shape:
        raise ValidationError(
            f"dimension mismatch: {pi.shape}, {pk.shape} predictions vs {y.shape} labels"
        )
    if y.size == 0:
        raise ValidationError("contingency table needs at least one instance")
    ci = threshold_labels(pi, tau) == y
    ck = threshold_labels(pk, tau) == y
    return ContingencyTable(
        n11=int(np.sum(ci & ck)),
        n10=int(np.sum(ci & ~ck)),
        n01=int(np.sum(~ci & ck)),
        n00=int(np.sum(~ci & ~ck)),
    )


def yule_q(table: ContingencyTable) -> tuple[float, bool]:
    """Yule's Q of a contingency table and whether it was degenerate.

    A zero denominator yields ``(0.0, True)``.
    """
    agree = table.n11 * table.n00
    disagree = table.n01 * table.n10
    denom = agree + disagree
    if denom == 0:
        return 0.0, True
    return (agree - disagree) / denom, False


def cohen_kappa(table: ContingencyTable) -> float:
    """Cohen's kappa on the two classifiers' correct/incorrect indicators."""
    n = table.total
    p_o = (table.n11 + table.n00) / n
    ci = (table.n11 + table.n10) / n
    ck = (table.n11 + table.n01) / n
    p_e = ci * ck + (1 - ci) * (1 - ck)
    if p_e == 1.0:
        # both indicators constant: agreement is total and trivially chance
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1 - p_e)


@dataclass(frozen=True)
class DiversityStats:
    q: float
    q_adjusted: float
    kappa: float
    table: ContingencyTable
    degenerate: bool = False


def pair_diversity(pred_i, pred_k, labels, tau: float = 0.5) -> DiversityStats:
    """Q statistic, 1 - |Q| and kappa for two prediction vectors."""
    table = contingency_table(pred_i, pred_k, labels, tau)
    q, degenerate = yule_q(table)
    return DiversityStats(q, 1.0 - abs(q), cohen_kappa(table), table, degenerate)


def _q_adjusted_all(values: np.ndarray, y: np.ndarray) -> np.ndarray:
    correct = ((values > 0.5).astype(np.int8) == y[:, None]).astype(np.int64)
    wrong = 1 - correct
    n11 = correct.T @ correct
    n00 = wrong.T @ wrong
    n10 = correct.T @ wrong
    agree = n11 * n00
    disagree = n10 * n10.T
    denom = agree + disagree
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(denom > 0, (agree - disagree) / np.where(denom > 0, denom, 1), 0.0)
    out = 1.0 - np.abs(q)
    np.fill_diagonal(out, 0.0)
    return out


def diversity_matrix(matrix: PredictionMatrix, labels) -> np.ndarray:
    """Symmetric matrix of pairwise ``1 - |Q|`` with zero diagonal."""
    if matrix.n_classifiers < 2:
        raise ValidationError("diversity matrix needs at least two classifiers")
    y = validate_labels(labels, matrix.n_instances)
    return _q_adjusted_all(matrix.values, y)


def correlation_distance(col_i, col_j) -> float:
    """``1 - |Pearson rho|``; 1 when either column is constant."""
    a = np.asarray(col_i, dtype=np.float64)
    b = np.asarray(col_j, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValidationError("correlation distance needs two equal-length vectors of length >= 2")
    a = a - a.mean()
    b = b - b.mean()
    sa, sb = np.sqrt(a @ a), np.sqrt(b @ b)
    if sa == 0.0 or sb == 0.0:
        return 1.0
    rho = float(np.clip((a @ b) / (sa * sb), -1.0, 1.0))
    return 1.0 - abs(rho)


def correlation_distance_matrix(values: np.ndarray) -> np.ndarray:
    """Pairwise ``1 - |rho|`` between columns of ``values``."""
    v = np.asarray(values, dtype=np.float64)
    c = v - v.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", c, c))
    const = norms == 0.0
    norms[const] = 1.0
    rho = np.clip((c.T @ c) / np.outer(norms, norms), -1.0, 1.0)
    d = 1.0 - np.abs(rho)
    d[const, :] = 1.0
    d[:, const] = 1.0
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return d


def mean_pairwise_profile(matrix: PredictionMatrix, labels) -> list[dict]:
    """Per-classifier mean ``1 - |Q|`` against all others plus individual AUC.

    Records are sorted by mean diversity ascending, ties by column order.
    """
    y = validate_labels(labels, matrix.n_instances)
    require_both_classes(y, "AUC")
    div = diversity_matrix(matrix, y)
    m = matrix.n_classifiers
    means = div.sum(axis=1) / (m - 1)
    records = [
        {
            "classifier": cid,
            "diversity": float(means[j]),
            "auc": auc(matrix.values[:, j], y),
        }
        for j, cid in enumerate(matrix.classifier_ids)
    ]
    return sorted(records, key=lambda r: r["diversity"])
