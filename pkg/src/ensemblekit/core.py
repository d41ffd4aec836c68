"""Domain types shared by every module: prediction matrices, labels, fitted models."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping, Sequence

import numpy as np

__all__ = [
    "ValidationError",
    "PredictionMatrix",
    "ContingencyTable",
    "EnsembleModel",
    "MethodReport",
    "validate_labels",
    "validate_matrix",
    "require_both_classes",
    "as_matrix",
    "sigmoid",
    "logit",
]


class ValidationError(ValueError):
    """Raised when input data violates a domain invariant."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PredictionMatrix:
    """Instances x classifiers matrix of positive-class probabilities.

    Parameters
    ----------
    values : array of shape (n_instances, n_classifiers)
        Entry ``(i, j)`` is the probability that instance ``i`` is positive
        according to classifier ``j``.
    classifier_ids : sequence of str
        Unique column names.
    instance_ids : sequence of str, optional
        Row identifiers; defaults to ``"0", "1", ...``.
    group_of : mapping, optional
        Column -> bag-group name. Columns missing from the mapping form
        their own singleton group.
    """

    values: np.ndarray
    classifier_ids: tuple[str, ...]
    instance_ids: tuple[str, ...] = ()
    group_of: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValidationError(f"prediction matrix must be 2-D, got {values.ndim}-D")
        n, m = values.shape
        cids = tuple(str(c) for c in self.classifier_ids)
        if len(cids) != m:
            raise ValidationError(
                f"dimension mismatch: {m} columns but {len(cids)} classifier ids"
            )
        seen: set[str] = set()
        for j, c in enumerate(cids):
            if c in seen:
                raise ValidationError(f"duplicate classifier id {c!r} at column {j}")
            seen.add(c)
        iids = tuple(str(i) for i in self.instance_ids) if self.instance_ids else tuple(
            str(i) for i in range(n)
        )
        if len(iids) != n:
            raise ValidationError(
                f"dimension mismatch: {n} rows but {len(iids)} instance ids"
            )
        if not np.issubdtype(values.dtype, np.number):
            raise ValidationError("prediction values must be numeric")
        values = values.astype(np.float64)
        bad = ~np.isfinite(values)
        if bad.any():
            r, c = map(int, np.argwhere(bad)[0])
            raise ValidationError(f"missing or non-finite value at ({r}, {c})")
        bad = (values < 0.0) | (values > 1.0)
        if bad.any():
            r, c = map(int, np.argwhere(bad)[0])
            raise ValidationError(f"value out of range at ({r}, {c}): {values[r, c]!r}")
        groups = dict(self.group_of)
        unknown = set(groups) - seen
        if unknown:
            raise ValidationError(f"group map names unknown classifiers: {sorted(unknown)}")
        groups = {c: str(groups.get(c, c)) for c in cids}
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "classifier_ids", cids)
        object.__setattr__(self, "instance_ids", iids)
        object.__setattr__(self, "group_of", MappingProxyType(groups))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_instances(self) -> int:
        return self.values.shape[0]

    @property
    def n_classifiers(self) -> int:
        return self.values.shape[1]

    @property
    def groups(self) -> list[str]:
        """Bag-group names in order of first appearance."""
        return list(dict.fromkeys(self.group_of[c] for c in self.classifier_ids))

    def index_of(self, classifier_id: str) -> int:
        try:
            return self.classifier_ids.index(classifier_id)
        except ValueError:
            raise KeyError(f"unknown classifier id {classifier_id!r}") from None

    def column(self, classifier_id: str) -> np.ndarray:
        return self.values[:, self.index_of(classifier_id)]

    def group_members(self, group: str) -> list[int]:
        return [j for j, c in enumerate(self.classifier_ids) if self.group_of[c] == group]

    def take_rows(self, rows: Sequence[int] | np.ndarray) -> "PredictionMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        return PredictionMatrix(
            self.values[rows],
            self.classifier_ids,
            tuple(self.instance_ids[r] for r in rows),
            self.group_of,
        )

    def select_columns(self, ids: Sequence[str]) -> "PredictionMatrix":
        idx = [self.index_of(c) for c in ids]
        return PredictionMatrix(
            self.values[:, idx],
            tuple(ids),
            self.instance_ids,
            {c: self.group_of[c] for c in ids},
        )

    def equals(self, other: "PredictionMatrix", atol: float = 0.0) -> bool:
        return (
            self.classifier_ids == other.classifier_ids
            and self.instance_ids == other.instance_ids
            and dict(self.group_of) == dict(other.group_of)
            and self.shape == other.shape
            and bool(np.all(np.abs(self.values - other.values) <= atol))
        )

    @classmethod
    def from_array(cls, values, classifier_ids=None, instance_ids=None, group_of=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if classifier_ids is None:
            classifier_ids = [f"c{j}" for j in range(values.shape[1])]
        return cls(values, tuple(classifier_ids), tuple(instance_ids or ()), dict(group_of or {}))


def as_matrix(X, group_of=None) -> PredictionMatrix:
    """Coerce an array-like or a PredictionMatrix into a PredictionMatrix."""
    if isinstance(X, PredictionMatrix):
        return X
    return PredictionMatrix.from_array(X, group_of=group_of)


def validate_labels(labels, n: int | None = None) -> np.ndarray:
    """Return ``labels`` as an int8 vector of 0/1, raising on anything else."""
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValidationError(f"labels must be 1-D, got shape {y.shape}")
    if n is not None and y.shape[0] != n:
        raise ValidationError(f"dimension mismatch: {n} rows but {y.shape[0]} labels")
    if y.dtype.kind in "biuf":
        bad = np.flatnonzero(~np.isin(y, (0, 1)))
    else:
        bad = [i for i, v in enumerate(y.tolist()) if isinstance(v, str) or v not in (0, 1)]
    if len(bad):
        i = int(bad[0])
        raise ValidationError(f"non-binary label at index {i}: {y[i]!r}")
    out = y.astype(np.int8)
    out.setflags(write=False)
    return out


def require_both_classes(labels: np.ndarray, what: str) -> None:
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0 or n_pos == labels.shape[0]:
        raise ValidationError(f"{what} undefined: labels contain a single class")


def validate_matrix(matrix: PredictionMatrix, labels) -> tuple[PredictionMatrix, np.ndarray]:
    """Check a (matrix, labels) pair and return it with labels normalised."""
    if not isinstance(matrix, PredictionMatrix):
        matrix = as_matrix(matrix)
    return matrix, validate_labels(labels, matrix.n_instances)


@dataclass(frozen=True)
class ContingencyTable:
    """Joint correctness counts of two classifiers (``n10``: first right, second wrong)."""

    n11: int
    n10: int
    n01: int
    n00: int

    @property
    def total(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00


def sigmoid(t) -> np.ndarray:
    """Overflow-safe logistic function."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logit(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """A fitted combiner over the columns of a prediction matrix.

    ``kind`` is one of ``weighted_mean``, ``logistic_meta``, ``intra_cluster``
    or ``inter_cluster``. ``members`` lists ``(unit_id, weight)``; for
    ``weighted_mean`` the units are classifier ids and the weights are the
    mixing proportions, for the stacked kinds the weights are the normalised
    coefficient magnitudes. ``cluster_map`` maps each column to the unit that
    averages it (bag group or cluster); ``meta`` holds the logistic model(s).
    """

    kind: str
    members: tuple[tuple[str, float], ...]
    meta: Any = None
    cluster_map: Mapping[str, str] | None = None

    KINDS = ("weighted_mean", "logistic_meta", "intra_cluster", "inter_cluster")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if self.kind == "weighted_mean":
            w = np.array([m[1] for m in self.members], dtype=float)
            if w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValidationError("weighted_mean weights must be nonnegative and sum to 1")

    @property
    def weights(self) -> dict[str, float]:
        return dict(self.members)

    @property
    def units(self) -> list[str]:
        return [m[0] for m in self.members]

    def _unit_columns(self, matrix: PredictionMatrix) -> dict[str, list[int]]:
        cols: dict[str, list[int]] = {u: [] for u in self.units}
        if self.cluster_map is None:
            for u in cols:
                cols[u].append(matrix.index_of(u))
            return cols
        missing = set(self.cluster_map) - set(matrix.classifier_ids)
        if missing:
            raise KeyError(f"model references unknown classifier ids: {sorted(missing)}")
        # training column order, so per-cluster feature layout matches the fit
        for c, u in self.cluster_map.items():
            cols[u].append(matrix.index_of(c))
        return cols

    def unit_features(self, matrix: PredictionMatrix) -> np.ndarray:
        """Per-unit mean columns, in ``members`` order."""
        cols = self._unit_columns(matrix)
        return np.column_stack([matrix.values[:, cols[u]].mean(axis=1) for u in self.units])

    def predict(self, matrix: PredictionMatrix) -> np.ndarray:
        """Ensemble probability for every row of ``matrix``."""
        matrix = as_matrix(matrix)
        if self.kind == "weighted_mean":
            idx = [matrix.index_of(u) for u in self.units]
            w = np.array([m[1] for m in self.members])
            return matrix.values[:, idx] @ w
        if self.kind in ("logistic_meta", "inter_cluster"):
            return self.meta.predict(self.unit_features(matrix))
        # intra_cluster: one logistic model per cluster, outputs averaged
        cols = self._unit_columns(matrix)
        outs = [
            model.predict(matrix.values[:, cols[u]])
            for u, model in zip(self.units, self.meta)
        ]
        return np.mean(outs, axis=0)


@dataclass
class MethodReport:
    """Evaluation record for one method on one dataset."""

    method: str
    dataset: str
    test_auc: float
    brier: float
    weights: dict[str, float] = field(default_factory=dict)
    trajectory: list[float] = field(default_factory=list)
    ensemble_size: int | None = None
    wall_time: float = 0.0
