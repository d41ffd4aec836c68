"""Level-1 logistic regression and stacking over prediction columns."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .combine import bag_aggregate
from .core import (
    EnsembleModel,
    PredictionMatrix,
    ValidationError,
    as_matrix,
    require_both_classes,
    sigmoid,
    validate_labels,
)

__all__ = [
    "LogisticModel",
    "logistic_objective",
    "fit_logistic",
    "predict_logistic",
    "stack_all",
    "stack_aggregated",
    "meta_weights",
    "subsample_rows",
    "StackingClassifier",
]

_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class LogisticModel:
    coefficients: np.ndarray
    intercept: float
    lam: float
    converged: bool
    iterations: int
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0]

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValidationError(
                f"feature width mismatch: model has {self.n_features}, got "
                f"{X.shape[1] if X.ndim == 2 else X.shape}"
            )
        return self.intercept + X @ self.coefficients

    def predict(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def logistic_objective(theta, X, y, lam: float):
    """Mean negative log-likelihood plus ``lam/2 * ||w||^2`` and its gradient.

    ``theta`` is ``[intercept, w_1..w_m]``; the intercept is not penalised.
    Probabilities are clipped to ``[1e-12, 1 - 1e-12]`` inside the log only.
    """
    X = np.asarray(X, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    A = _design(X)
    p = sigmoid(A @ theta)
    pc = np.clip(p, _EPS, 1 - _EPS)
    n = X.shape[0]
    w = theta[1:]
    f = -np.mean(y * np.log(pc) + (1 - y) * np.log1p(-pc)) + 0.5 * lam * (w @ w)
    g = A.T @ (p - y) / n
    g[1:] += lam * w
    return float(f), g


def fit_logistic(
    features,
    labels,
    lam: float = 1e-3,
    tol: float = 1e-8,
    max_iter: int = 100,
    init=None,
) -> LogisticModel:
    """L2-regularised logistic regression by IRLS with step halving.

    Falls back to a backtracking gradient step whenever the Newton system is
    ill-conditioned. Non-convergence is reported on the returned model, not
    raised.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise ValidationError("features must be finite")
    y = validate_labels(labels, X.shape[0]).astype(np.float64)
    require_both_classes(y, "logistic fit")
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    n, m = X.shape
    A = _design(X)
    penalty = np.full(m + 1, lam)
    penalty[0] = 0.0
    theta = np.zeros(m + 1) if init is None else np.array(init, dtype=np.float64)
    if theta.shape != (m + 1,):
        raise ValidationError(f"init must have length {m + 1}")

    f, g = logistic_objective(theta, X, y, lam)
    history = [f]
    converged = bool(np.max(np.abs(g)) <= tol)
    it = 0
    while not converged and it < max_iter:
        it += 1
        p = sigmoid(A @ theta)
        wts = p * (1 - p)
        H = (A.T * wts) @ A / n + np.diag(penalty)
        direction = None
        try:
            if np.linalg.cond(H) < 1e12:
                direction = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            direction = None
        newton = direction is not None
        if not newton:
            direction = -g
        step = 1.0
        accepted = False
        for _ in range(60):
            cand = theta + step * direction
            f_new, g_new = logistic_objective(cand, X, y, lam)
            # Armijo condition for gradient steps; plain decrease for Newton
            bound = f if newton else f - 1e-4 * step * (g @ g)
            if f_new <= bound:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no decrease representable at this precision
            converged = bool(np.max(np.abs(g)) <= max(tol, 1e-6))
            break
        delta = cand - theta
        theta, f, g = cand, f_new, g_new
        history.append(f)
        if np.max(np.abs(g)) <= tol or np.max(np.abs(delta)) <= tol:
            converged = True
    if not converged:
        warnings.warn(f"logistic fit did not converge in {max_iter} iterations", RuntimeWarning)
    return LogisticModel(
        coefficients=theta[1:].copy(),
        intercept=float(theta[0]),
        lam=lam,
        converged=converged,
        iterations=it,
        history=tuple(history),
    )


def predict_logistic(model: LogisticModel, features) -> np.ndarray:
    return model.predict(features)


def meta_weights(model: EnsembleModel) -> tuple[dict[str, float], dict[str, float]]:
    """Normalised coefficient magnitudes and the raw signed coefficients.

    Returns ``(normalised, raw)`` keyed by meta-feature (unit) id.
    """
    if model.kind not in ("logistic_meta", "inter_cluster"):
        raise ValidationError(f"meta weights need a single logistic model, got {model.kind!r}")
    coef = model.meta.coefficients
    return _normalise_abs(model.units, coef), dict(zip(model.units, map(float, coef)))


def _normalise_abs(units, coef) -> dict[str, float]:
    mag = np.abs(np.asarray(coef, dtype=np.float64))
    total = mag.sum()
    norm = mag / total if total > 0 else np.full(mag.size, 1.0 / mag.size)
    return dict(zip(units, map(float, norm)))


def _stack(features: np.ndarray, units, labels, lam, tol, max_iter, cluster_map=None, kind="logistic_meta"):
    model = fit_logistic(features, labels, lam=lam, tol=tol, max_iter=max_iter)
    weights = _normalise_abs(units, model.coefficients)
    return EnsembleModel(
        kind=kind,
        members=tuple((u, weights[u]) for u in units),
        meta=model,
        cluster_map=cluster_map,
    )


def stack_all(val_matrix: PredictionMatrix, val_labels, lam: float = 1e-3, tol: float = 1e-8, max_iter: int = 100) -> EnsembleModel:
    """Logistic meta-learner over every column of the validation matrix."""
    y = validate_labels(val_labels, val_matrix.n_instances)
    return _stack(val_matrix.values, list(val_matrix.classifier_ids), y, lam, tol, max_iter)


def stack_aggregated(val_matrix: PredictionMatrix, val_labels, lam: float = 1e-3, tol: float = 1e-8, max_iter: int = 100) -> EnsembleModel:
    """Stacking over bag-group means: ``stack_all`` applied to ``bag_aggregate``.

    The returned model averages each group's columns itself, so it applies
    directly to an un-aggregated test matrix.
    """
    y = validate_labels(val_labels, val_matrix.n_instances)
    agg = bag_aggregate(val_matrix)
    return _stack(
        agg.values, list(agg.classifier_ids), y, lam, tol, max_iter,
        cluster_map=dict(val_matrix.group_of),
    )


def subsample_rows(labels, fraction: float, seed) -> np.ndarray:
    """Sorted row indices of a stratified random ``fraction`` of the rows."""
    y = validate_labels(labels)
    if not 0 < fraction <= 1:
        raise ValidationError("fraction must be in (0, 1]")
    if fraction == 1:
        return np.arange(y.size)
    rng = np.random.default_rng(seed)
    keep = []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        k = max(1, int(round(fraction * idx.size))) if idx.size else 0
        keep.append(rng.choice(idx, size=k, replace=False))
    return np.sort(np.concatenate(keep))


class StackingClassifier(ClassifierMixin, BaseEstimator):
    """Logistic-regression stacking over a prediction matrix.

    Parameters
    ----------
    mode : {"all", "aggregated"}
        ``"aggregated"`` averages each bag group's columns before stacking.
    lam : float
        L2 penalty on the meta coefficients.
    val_fraction : float
        Fraction of validation rows used for fitting (stratified draw).
    random_state : int or None
        Seed for the validation subsample.
    """

    def __init__(self, mode="aggregated", lam=1e-3, tol=1e-8, max_iter=100, val_fraction=1.0, random_state=None):
        self.mode = mode
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter
        self.val_fraction = val_fraction
        self.random_state = random_state

    def fit(self, X, y):
        X = as_matrix(X)
        y = validate_labels(y, X.n_instances)
        if self.mode not in ("all", "aggregated"):
            raise ValueError(f"mode must be 'all' or 'aggregated', got {self.mode!r}")
        rows = subsample_rows(y, self.val_fraction, self.random_state)
        if rows.size != y.size:
            X, y = X.take_rows(rows), y[rows]
        fit = stack_all if self.mode == "all" else stack_aggregated
        self.model_ = fit(X, y, lam=self.lam, tol=self.tol, max_iter=self.max_iter)
        self.classes_ = np.array([0, 1])
        self.weights_, self.coef_ = meta_weights(self.model_)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = self.model_.predict(as_matrix(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)
