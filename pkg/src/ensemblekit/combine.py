"""Simple aggregation of prediction columns."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .core import PredictionMatrix, ValidationError, as_matrix, validate_labels

__all__ = ["mean_aggregate", "bag_aggregate", "RunningMean", "MeanAggregator"]


def mean_aggregate(matrix: PredictionMatrix, subset: Sequence[str]) -> np.ndarray:
    """Row-wise mean of the columns named in ``subset``.

    Repeated ids count with multiplicity, so ``[A, A, B]`` gives
    ``(2A + B) / 3``.
    """
    if len(subset) == 0:
        raise ValidationError("mean_aggregate needs a non-empty subset")
    idx = [matrix.index_of(c) for c in subset]
    return matrix.values[:, idx].mean(axis=1)


def bag_aggregate(matrix: PredictionMatrix) -> PredictionMatrix:
    """Collapse every bag group to the mean of its columns.

    Output columns are named after the groups, in order of first
    appearance, and each forms its own group.
    """
    groups = matrix.groups
    cols = [matrix.values[:, matrix.group_members(g)].mean(axis=1) for g in groups]
    return PredictionMatrix(
        np.column_stack(cols), tuple(groups), matrix.instance_ids, {g: g for g in groups}
    )


class RunningMean:
    """Cumulative moving average over pushed columns (stores the sum)."""

    def __init__(self, n: int):
        self.sum = np.zeros(n, dtype=np.float64)
        self.count = 0

    def push(self, column) -> "RunningMean":
        column = np.asarray(column, dtype=np.float64)
        if column.shape != self.sum.shape:
            raise ValidationError(
                f"dimension mismatch: column of length {column.shape[0]}, state of {self.sum.shape[0]}"
            )
        self.sum += column
        self.count += 1
        return self

    def current(self) -> np.ndarray:
        if self.count == 0:
            raise ValidationError("running mean is empty")
        return self.sum / self.count

    def peek(self, column) -> np.ndarray:
        """Mean that would result from pushing ``column``, without pushing it."""
        return (self.sum + column) / (self.count + 1)

    def copy(self) -> "RunningMean":
        other = RunningMean(self.sum.shape[0])
        other.sum = self.sum.copy()
        other.count = self.count
        return other


def running_push(state: RunningMean, column) -> RunningMean:
    return state.copy().push(column)


def running_current(state: RunningMean) -> np.ndarray:
    return state.current()


class MeanAggregator(ClassifierMixin, BaseEstimator):
    """Unweighted mean of all prediction columns.

    Fitting only records the column layout; there is nothing to learn.
    """

    def fit(self, X, y=None):
        X = as_matrix(X)
        if y is not None:
            validate_labels(y, X.n_instances)
        self.classifier_ids_ = X.classifier_ids
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "classifier_ids_")
        p = mean_aggregate(as_matrix(X), list(self.classifier_ids_))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)
