"""Agglomerative clustering of classifier columns and cluster-based stacking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .core import EnsembleModel, PredictionMatrix, ValidationError, as_matrix, validate_labels
from .metrics import auc, correlation_distance_matrix, diversity_matrix
from .stack import _normalise_abs, fit_logistic

__all__ = [
    "Dendrogram",
    "hcluster",
    "cut_k",
    "column_distances",
    "ClusterStackModel",
    "intra_cluster_stack",
    "inter_cluster_stack",
    "SweepResult",
    "sweep_k",
    "ClusterStacking",
]


@dataclass(frozen=True)
class Dendrogram:
    """Merge sequence over ``n_leaves`` leaves.

    Leaves are nodes ``0..M-1``; the node created by merge ``t`` is ``M + t``.
    """

    merges: tuple[tuple[int, int, float], ...]
    n_leaves: int

    @property
    def heights(self) -> np.ndarray:
        return np.array([h for _, _, h in self.merges])


def _check_distance(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValidationError("distance matrix must be square")
    if not np.all(np.isfinite(d)):
        raise ValidationError("distance matrix must be finite")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12):
        raise ValidationError("distance matrix must be symmetric")
    if np.any(np.diag(d) != 0):
        raise ValidationError("distance matrix must have a zero diagonal")
    if np.any(d < 0) or np.any(d > 1):
        raise ValidationError("distances must lie in [0, 1]")
    return d


def hcluster(distance) -> Dendrogram:
    """Average-linkage (UPGMA) agglomerative clustering.

    When several pairs share the minimum distance the pair whose smallest
    leaf indices are lexicographically smallest merges first.
    """
    d = _check_distance(distance)
    m = d.shape[0]
    if m == 0:
        raise ValidationError("cannot cluster zero columns")
    # active clusters kept sorted by smallest leaf index, so row-major order
    # of the upper triangle is the tie order
    D = d.copy()
    np.fill_diagonal(D, np.inf)
    node = list(range(m))
    size = [1] * m
    merges = []
    for t in range(m - 1):
        iu = np.triu_indices(D.shape[0], k=1)
        vals = D[iu]
        first = int(np.argmin(vals))
        i, j = int(iu[0][first]), int(iu[1][first])
        h = float(vals[first])
        merges.append((node[i], node[j], h))
        si, sj = size[i], size[j]
        new_row = (si * D[i] + sj * D[j]) / (si + sj)
        D[i, :] = new_row
        D[:, i] = new_row
        D[i, i] = np.inf
        D = np.delete(np.delete(D, j, axis=0), j, axis=1)
        node[i] = m + t
        size[i] = si + sj
        del node[j], size[j]
    return Dendrogram(tuple(merges), m)


def cut_k(dendrogram: Dendrogram, k: int) -> np.ndarray:
    """Cluster ids (1..k) per leaf after undoing the last ``k - 1`` merges.

    Clusters are numbered in order of their smallest leaf index.
    """
    m = dendrogram.n_leaves
    if not 1 <= k <= m:
        raise ValidationError(f"k={k} outside [1, {m}]")
    parent = list(range(2 * m - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t, (a, b, _) in enumerate(dendrogram.merges[: m - k]):
        parent[find(a)] = m + t
        parent[find(b)] = m + t
    roots = [find(i) for i in range(m)]
    label: dict[int, int] = {}
    for r in roots:
        label.setdefault(r, len(label) + 1)
    return np.array([label[r] for r in roots])


def column_distances(matrix: PredictionMatrix, labels=None, distance: str = "pearson") -> np.ndarray:
    """Distance between classifier columns: ``1 - |rho|`` or ``1 - |Q|``.

    ``1 - |Q|`` is a diversity, so it is used as-is: diverse pairs are far.
    """
    if distance == "pearson":
        return correlation_distance_matrix(matrix.values)
    if distance == "qstat":
        if labels is None:
            raise ValidationError("qstat distance needs labels")
        return diversity_matrix(matrix, labels)
    raise ValidationError(f"unknown distance {distance!r}")


@dataclass(frozen=True, eq=False)
class ClusterStackModel:
    mode: str
    k: int
    assignment: dict[str, int]
    model: EnsembleModel

    @property
    def logistic_models(self):
        return self.model.meta if self.mode == "intra" else (self.model.meta,)

    def predict(self, matrix) -> np.ndarray:
        return self.model.predict(as_matrix(matrix))


def _assign(matrix, labels, k, distance, dendrogram):
    if dendrogram is None:
        dendrogram = hcluster(column_distances(matrix, labels, distance))
    if dendrogram.n_leaves != matrix.n_classifiers:
        raise ValidationError("dendrogram leaf count does not match the matrix")
    ids = cut_k(dendrogram, k)
    return {c: int(i) for c, i in zip(matrix.classifier_ids, ids)}


def _members(assignment: dict[str, int], k: int) -> list[list[str]]:
    out: list[list[str]] = [[] for _ in range(k)]
    for c, i in assignment.items():
        out[i - 1].append(c)
    return out


def intra_cluster_stack(val_matrix: PredictionMatrix, val_labels, k: int, distance: str = "pearson",
                        lam: float = 1e-3, tol: float = 1e-8, max_iter: int = 100,
                        dendrogram: Dendrogram | None = None) -> ClusterStackModel:
    """One logistic model per cluster; the prediction is their mean output."""
    y = validate_labels(val_labels, val_matrix.n_instances)
    assignment = _assign(val_matrix, y, k, distance, dendrogram)
    models = []
    for cid, cols in enumerate(_members(assignment, k), start=1):
        idx = [val_matrix.index_of(c) for c in cols]
        try:
            models.append(fit_logistic(val_matrix.values[:, idx], y, lam=lam, tol=tol, max_iter=max_iter))
        except ValidationError as exc:
            raise ValidationError(f"cluster {cid}: {exc}") from exc
    units = [str(i) for i in range(1, k + 1)]
    model = EnsembleModel(
        kind="intra_cluster",
        members=tuple((u, 1.0 / k) for u in units),
        meta=tuple(models),
        cluster_map={c: str(i) for c, i in assignment.items()},
    )
    return ClusterStackModel("intra", k, assignment, model)


def inter_cluster_stack(val_matrix: PredictionMatrix, val_labels, k: int, distance: str = "pearson",
                        lam: float = 1e-3, tol: float = 1e-8, max_iter: int = 100,
                        dendrogram: Dendrogram | None = None) -> ClusterStackModel:
    """Average within clusters, then one logistic model over the k means."""
    y = validate_labels(val_labels, val_matrix.n_instances)
    assignment = _assign(val_matrix, y, k, distance, dendrogram)
    feats = np.column_stack([
        val_matrix.values[:, [val_matrix.index_of(c) for c in cols]].mean(axis=1)
        for cols in _members(assignment, k)
    ])
    meta = fit_logistic(feats, y, lam=lam, tol=tol, max_iter=max_iter)
    units = [str(i) for i in range(1, k + 1)]
    weights = _normalise_abs(units, meta.coefficients)
    model = EnsembleModel(
        kind="inter_cluster",
        members=tuple((u, weights[u]) for u in units),
        meta=meta,
        cluster_map={c: str(i) for c, i in assignment.items()},
    )
    return ClusterStackModel("inter", k, assignment, model)


@dataclass(frozen=True)
class SweepResult:
    best_k: int
    aucs: dict[int, float]
    models: dict[int, ClusterStackModel]


def sweep_k(val_matrix: PredictionMatrix, val_labels, mode: str, k_range: Iterable[int],
            distance: str = "pearson", eval_matrix: PredictionMatrix | None = None,
            eval_labels=None, **fit_kw) -> SweepResult:
    """Fit ``mode`` at every k and pick the best by AUC (ties: smallest k).

    AUC is measured on the validation data unless ``eval_matrix`` and
    ``eval_labels`` are supplied.
    """
    y = validate_labels(val_labels, val_matrix.n_instances)
    fit = {"intra": intra_cluster_stack, "inter": inter_cluster_stack}.get(mode)
    if fit is None:
        raise ValidationError(f"mode must be 'intra' or 'inter', got {mode!r}")
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1 or ks[-1] > val_matrix.n_classifiers:
        raise ValidationError(f"k range must lie within [1, {val_matrix.n_classifiers}]")
    dendro = hcluster(column_distances(val_matrix, y, distance))
    if eval_matrix is None:
        eval_matrix, eval_y = val_matrix, y
    else:
        eval_y = validate_labels(eval_labels, eval_matrix.n_instances)
    aucs, models = {}, {}
    for k in ks:
        models[k] = fit(val_matrix, y, k, distance=distance, dendrogram=dendro, **fit_kw)
        aucs[k] = auc(models[k].predict(eval_matrix), eval_y)
    best = max(ks, key=lambda k: (aucs[k], -k))
    return SweepResult(best, aucs, models)


class ClusterStacking(ClassifierMixin, BaseEstimator):
    """Intra- or inter-cluster stacking with a fixed k or a swept range.

    ``k`` may be an int or an iterable of candidates; with candidates the
    one with the best validation AUC is kept.
    """

    def __init__(self, mode="intra", k=2, distance="pearson", lam=1e-3, tol=1e-8, max_iter=100):
        self.mode = mode
        self.k = k
        self.distance = distance
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = as_matrix(X)
        y = validate_labels(y, X.n_instances)
        ks = [self.k] if np.isscalar(self.k) else list(self.k)
        ks = [min(int(k), X.n_classifiers) for k in ks]
        res = sweep_k(X, y, self.mode, ks, distance=self.distance,
                      lam=self.lam, tol=self.tol, max_iter=self.max_iter)
        self.sweep_ = res
        self.k_ = res.best_k
        self.model_ = res.models[res.best_k]
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = self.model_.predict(X)
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)
