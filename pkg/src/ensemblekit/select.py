"""Greedy forward selection and Caruana-style ensemble selection (CES)."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .combine import RunningMean
from .core import EnsembleModel, PredictionMatrix, ValidationError, as_matrix, validate_labels
from .metrics import _midranks, auc, brier, diversity_matrix

__all__ = [
    "CesParams",
    "SelectionRecord",
    "SelectionTrajectory",
    "greedy_select",
    "ces_select",
    "weights_from_counts",
    "GreedySelector",
    "CESSelector",
]


@dataclass(frozen=True)
class CesParams:
    init_n: int = 2
    max_size: int = 100
    with_replacement: bool = True
    candidate_fraction: float = 1.0
    seed: int | None = None

    def check(self, pool_size: int) -> None:
        if pool_size == 0:
            raise ValidationError("empty classifier pool")
        if self.init_n < 0 or self.init_n > pool_size:
            raise ValidationError(f"init_n={self.init_n} outside [0, {pool_size}]")
        if self.max_size < max(self.init_n, 1):
            raise ValidationError("max_size must be >= max(init_n, 1)")
        if not 0 < self.candidate_fraction <= 1:
            raise ValidationError("candidate_fraction must be in (0, 1]")


@dataclass(frozen=True)
class SelectionRecord:
    iteration: int
    chosen: str
    size: int
    val_auc: float
    mean_diversity: float
    brier: float
    phase: str = "search"
    # candidate column index -> ensemble AUC with that candidate added
    candidate_aucs: dict[int, float] = field(default_factory=dict, repr=False, compare=False)


@dataclass
class SelectionTrajectory:
    method: str
    records: list[SelectionRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def aucs(self) -> np.ndarray:
        return np.array([r.val_auc for r in self.records])

    @property
    def briers(self) -> np.ndarray:
        return np.array([r.brier for r in self.records])

    @property
    def chosen(self) -> list[str]:
        return [r.chosen for r in self.records]

    def best_iteration(self) -> int:
        """1-based iteration with the highest validation AUC (earliest on ties)."""
        return int(np.argmax(self.aucs)) + 1

    def model_at(self, iteration: int | None = None) -> EnsembleModel:
        """Weighted-mean model of the ensemble after ``iteration`` additions."""
        t = len(self.records) if iteration is None else iteration
        return weights_from_counts(self.chosen[:t])

    def rows(self) -> list[tuple]:
        return [(r.iteration, r.chosen, r.val_auc, r.mean_diversity, r.brier) for r in self.records]


def weights_from_counts(selections: Sequence[str]) -> EnsembleModel:
    """Weighted-mean model whose weights are normalised selection counts.

    Members appear in order of first selection.
    """
    if len(selections) == 0:
        raise ValidationError("weights_from_counts needs at least one selection")
    counts = Counter(selections)
    total = len(selections)
    return EnsembleModel(
        kind="weighted_mean",
        members=tuple((cid, counts[cid] / total) for cid in counts),
    )


class _Tracker:
    """Running ensemble state plus the per-record diagnostics."""

    def __init__(self, matrix: PredictionMatrix, y: np.ndarray):
        self.matrix = matrix
        self.y = y
        self.state = RunningMean(matrix.n_instances)
        self.div = diversity_matrix(matrix, y) if matrix.n_classifiers > 1 else np.zeros((1, 1))
        self.counts = np.zeros(matrix.n_classifiers, dtype=np.int64)
        self.pair_sum = 0.0

    def add(self, j: int) -> tuple[float, float, float]:
        # pairs between the new member and every existing member (duplicates count 0)
        self.pair_sum += float(self.div[j] @ self.counts)
        self.counts[j] += 1
        self.state.push(self.matrix.values[:, j])
        k = self.state.count
        mean_div = self.pair_sum / (k * (k - 1) / 2) if k > 1 else float("nan")
        current = self.state.current()
        return auc(current, self.y), mean_div, brier(current, self.y)


def _individual_order(matrix: PredictionMatrix, y: np.ndarray) -> list[int]:
    aucs = np.array([auc(matrix.values[:, j], y) for j in range(matrix.n_classifiers)])
    # stable sort keeps lowest column index first among equal AUCs
    return list(np.argsort(-aucs, kind="stable"))


def greedy_select(val_matrix: PredictionMatrix, val_labels, max_size: int | None = None) -> SelectionTrajectory:
    """Add classifiers in descending order of individual validation AUC."""
    y = validate_labels(val_labels, val_matrix.n_instances)
    m = val_matrix.n_classifiers
    if m == 0:
        raise ValidationError("empty classifier pool")
    max_size = m if max_size is None else max_size
    if not 1 <= max_size <= m:
        raise ValidationError(f"max_size={max_size} outside [1, {m}]")
    tracker = _Tracker(val_matrix, y)
    traj = SelectionTrajectory("greedy")
    for t, j in enumerate(_individual_order(val_matrix, y)[:max_size], start=1):
        a, d, b = tracker.add(j)
        traj.records.append(SelectionRecord(t, val_matrix.classifier_ids[j], t, a, d, b, "greedy"))
    return traj


def _candidate_aucs(state: RunningMean, values: np.ndarray, cands: np.ndarray, y: np.ndarray) -> np.ndarray:
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    out = np.empty(cands.size)
    for i, j in enumerate(cands):
        ranks = _midranks(state.peek(values[:, j]))
        out[i] = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return out


def ces_select(val_matrix: PredictionMatrix, val_labels, params: CesParams = CesParams()):
    """Forward selection with replacement, evaluating candidates in ensemble.

    Starts from the ``init_n`` individually best columns, then repeatedly
    adds whichever candidate maximises the validation AUC of the running
    mean. Ties go to the lowest column index.

    Returns
    -------
    trajectory : SelectionTrajectory
    model : EnsembleModel
        Weighted mean with normalised selection counts over the full run.
    """
    y = validate_labels(val_labels, val_matrix.n_instances)
    m = val_matrix.n_classifiers
    params.check(m)
    if y.sum() == 0 or y.sum() == y.size:
        raise ValidationError("AUC undefined: labels contain a single class")
    rng = np.random.default_rng(params.seed)
    values = val_matrix.values
    ids = val_matrix.classifier_ids
    tracker = _Tracker(val_matrix, y)
    traj = SelectionTrajectory("ces")

    for t, j in enumerate(_individual_order(val_matrix, y)[: params.init_n], start=1):
        a, d, b = tracker.add(j)
        traj.records.append(SelectionRecord(t, ids[j], t, a, d, b, "init"))

    for t in range(params.init_n + 1, params.max_size + 1):
        pool = np.arange(m) if params.with_replacement else np.flatnonzero(tracker.counts == 0)
        if pool.size == 0:
            break
        if params.candidate_fraction < 1:
            k = max(1, int(round(params.candidate_fraction * pool.size)))
            pool = np.sort(rng.choice(pool, size=k, replace=False))
        scores = _candidate_aucs(tracker.state, values, pool, y)
        best = int(pool[int(np.argmax(scores))])  # first max = lowest index
        a, d, b = tracker.add(best)
        traj.records.append(
            SelectionRecord(t, ids[best], t, a, d, b, "search",
                            dict(zip(map(int, pool), map(float, scores))))
        )
    return traj, traj.model_at()


class GreedySelector(ClassifierMixin, BaseEstimator):
    """Greedy selection; the fitted ensemble is the trajectory's best prefix."""

    def __init__(self, max_size=None):
        self.max_size = max_size

    def fit(self, X, y):
        X = as_matrix(X)
        y = validate_labels(y, X.n_instances)
        self.trajectory_ = greedy_select(X, y, self.max_size)
        self.best_size_ = self.trajectory_.best_iteration()
        self.model_ = self.trajectory_.model_at(self.best_size_)
        self.weights_ = self.model_.weights
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = self.model_.predict(as_matrix(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)


class CESSelector(GreedySelector):
    """Ensemble selection with replacement.

    Parameters
    ----------
    init_n : int
        Number of individually best classifiers that seed the ensemble.
    max_size : int
        Iteration budget; the whole trajectory is recorded.
    with_replacement : bool
    candidate_fraction : float
        Share of the pool evaluated per iteration (1.0 evaluates all).
    use_best : bool
        Keep the best-scoring prefix of the trajectory rather than the
        final ensemble.
    random_state : int or None
    """

    def __init__(self, init_n=2, max_size=100, with_replacement=True, candidate_fraction=1.0,
                 use_best=True, random_state=None):
        self.init_n = init_n
        self.max_size = max_size
        self.with_replacement = with_replacement
        self.candidate_fraction = candidate_fraction
        self.use_best = use_best
        self.random_state = random_state

    def fit(self, X, y):
        X = as_matrix(X)
        y = validate_labels(y, X.n_instances)
        params = CesParams(self.init_n, self.max_size, self.with_replacement,
                           self.candidate_fraction, self.random_state)
        self.trajectory_, final = ces_select(X, y, params)
        self.best_size_ = self.trajectory_.best_iteration() if self.use_best else len(self.trajectory_)
        self.model_ = self.trajectory_.model_at(self.best_size_) if self.use_best else final
        self.weights_ = self.model_.weights
        self.classes_ = np.array([0, 1])
        return self
