import warnings

import numpy as np
import pytest

from ensemblekit.combine import bag_aggregate
from ensemblekit.core import EnsembleModel, ValidationError, logit
from ensemblekit.datagen import generate, make_pool_spec
from ensemblekit.metrics import auc
from ensemblekit.stack import (
    LogisticModel,
    StackingClassifier,
    _normalise_abs,
    fit_logistic,
    logistic_objective,
    meta_weights,
    predict_logistic,
    stack_aggregated,
    stack_all,
    subsample_rows,
)
from oracles import as_pm


def fd_gradient(theta, X, y, lam, h=1e-5):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (logistic_objective(theta + e, X, y, lam)[0] - logistic_objective(theta - e, X, y, lam)[0]) / (2 * h)
    return g


def test_gradient_matches_finite_differences(rng):
    X = rng.random((200, 6))
    y = rng.integers(0, 2, 200)
    worst = 0.0
    for _ in range(20):
        theta = rng.normal(scale=2.0, size=7)
        g = logistic_objective(theta, X, y, 1e-3)[1]
        fd = fd_gradient(theta, X, y, 1e-3)
        worst = max(worst, np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)))
    assert worst < 1e-6


def test_fit_is_unique(small_pool):
    m, y = small_pool
    a = fit_logistic(m.values, y, lam=1e-3, tol=1e-10)
    init = np.random.default_rng(1).normal(scale=3, size=m.n_classifiers + 1)
    b = fit_logistic(m.values, y, lam=1e-3, tol=1e-10, init=init)
    assert a.converged and b.converged
    assert np.max(np.abs(a.coefficients - b.coefficients)) < 1e-6
    assert abs(a.intercept - b.intercept) < 1e-6


def test_objective_history_is_monotone(small_pool):
    m, y = small_pool
    init = np.full(m.n_classifiers + 1, 4.0)
    model = fit_logistic(m.values, y, init=init)
    assert len(model.history) >= 2
    assert np.all(np.diff(model.history) <= 0)


def test_separable_feature_gets_positive_weight():
    y = np.array([0, 1] * 20)
    model = fit_logistic(y[:, None].astype(float), y, lam=1e-2)
    assert model.coefficients[0] > 0
    assert auc(model.predict(y[:, None]), y) == 1.0


def test_constant_features_give_base_rate_intercept():
    y = np.r_[np.ones(13), np.zeros(37)]
    model = fit_logistic(np.full((50, 3), 0.4), y, lam=1e-3, tol=1e-12)
    assert np.max(np.abs(model.coefficients)) < 1e-6
    assert model.intercept == pytest.approx(float(logit(13 / 50)), abs=1e-6)


def test_single_class_is_an_error():
    with pytest.raises(ValidationError, match="undefined"):
        fit_logistic(np.ones((4, 1)), [1, 1, 1, 1])


def test_non_convergence_is_flagged(small_pool):
    m, y = small_pool
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = fit_logistic(m.values, y, max_iter=1, init=np.full(m.n_classifiers + 1, 5.0))
    assert not model.converged and model.iterations == 1


def test_zero_model_predicts_half():
    model = LogisticModel(np.zeros(3), 0.0, 1e-3, True, 0)
    assert np.array_equal(predict_logistic(model, np.random.default_rng(0).random((5, 3))), np.full(5, 0.5))


def test_prediction_monotone_in_score():
    model = LogisticModel(np.array([1.0]), 0.0, 1e-3, True, 0)
    p = model.predict(np.array([[0.0], [5.0], [20.0], [50.0]]))
    assert np.all(np.diff(p) > 0) and p[-1] == pytest.approx(1.0)


def test_predictions_invariant_to_row_order(small_pool, rng):
    m, y = small_pool
    perm = rng.permutation(m.n_instances)
    a = fit_logistic(m.values, y)
    b = fit_logistic(m.values[perm], y[perm])
    assert np.allclose(a.predict(m.values), b.predict(m.values), atol=1e-8, rtol=0)


def test_stack_all_on_exact_label_column():
    spec = make_pool_spec(200, 0.4, [0.5, 0.5], [0.0, 0.0], seed=1)
    m, y, _ = generate(spec)
    v = np.column_stack([m.values, y])
    model = stack_all(as_pm(v, ["a", "b", "label"]), y)
    m2, y2, _ = generate(make_pool_spec(200, 0.4, [0.5, 0.5], [0.0, 0.0], seed=2))
    assert auc(model.predict(as_pm(np.column_stack([m2.values, y2]), ["a", "b", "label"])), y2) == 1.0


def test_duplicated_column_refit(small_pool):
    # the two copies split the weight under the L2 penalty, which equals one copy at half the penalty
    m, y = small_pool
    col = m.values[:, 0]
    dup = stack_all(as_pm(np.column_stack([col, col]), ["a", "a2"]), y, lam=1e-2, tol=1e-12)
    single = stack_all(as_pm(col, ["a"]), y, lam=5e-3, tol=1e-12)
    c_dup, c_one = dup.meta.coefficients, single.meta.coefficients
    assert c_dup[0] == pytest.approx(c_dup[1], abs=1e-9)
    assert c_dup.sum() == pytest.approx(c_one[0], abs=1e-6)
    assert np.max(np.abs(dup.meta.predict(np.column_stack([col, col])) - single.meta.predict(col[:, None]))) < 1e-7


def test_stack_aggregated_equals_stack_all_of_aggregate(small_pool):
    m, y = small_pool
    agg = stack_aggregated(m, y)
    ref = stack_all(bag_aggregate(m), y)
    assert np.array_equal(agg.meta.coefficients, ref.meta.coefficients)
    assert np.max(np.abs(agg.predict(m) - ref.predict(bag_aggregate(m)))) <= 1e-12


def test_stack_aggregated_singletons_equals_stack_all(rng):
    y = np.r_[0, 1, rng.integers(0, 2, 60)]
    m = as_pm(rng.random((62, 4)))
    assert np.array_equal(stack_aggregated(m, y).predict(m), stack_all(m, y).predict(m))


def test_stack_aggregated_identical_bags_equals_deduplicated(rng):
    y = np.r_[0, 1, rng.integers(0, 2, 60)]
    base = rng.random((62, 3))
    ids = [f"{g}_b{k}" for g in "xyz" for k in range(4)]
    m = as_pm(np.repeat(base, 4, axis=1), ids, {c: c[0] for c in ids})
    dedup = as_pm(base, ["x", "y", "z"])
    assert np.max(np.abs(stack_aggregated(m, y).predict(m) - stack_all(dedup, y).predict(dedup))) <= 1e-12


def _pool(seed, signal, loading, bags=1, n=1000):
    spec = make_pool_spec(2 * n, 0.35, signal, loading, bags=bags, seed=seed,
                          alpha=[3.0 if j % 2 else 1.0 for j in range(len(signal))],
                          beta=[1.0 if j % 2 else 0.0 for j in range(len(signal))])
    m, y, _ = generate(spec)
    return (m.take_rows(range(n)), y[:n]), (m.take_rows(range(n, 2 * n)), y[n:])


@pytest.mark.slow
def test_stack_all_tracks_best_base_on_twenty_columns():
    gaps = []
    for seed in range(50):
        (vm, vy), (tm, ty) = _pool(seed, np.linspace(1.0, 0.1, 20), [0.8] * 20)
        best_base = max(auc(tm.values[:, j], ty) for j in range(20))
        gaps.append(auc(stack_all(vm, vy).predict(tm), ty) - best_base)
    assert np.median(gaps) >= -0.01


@pytest.mark.slow
def test_stack_aggregated_beats_mean_on_median():
    diffs = []
    for seed in range(50):
        (vm, vy), (tm, ty) = _pool(seed, [1.0, 0.8, 0.6, 0.4, 0.2], [0.8] * 5, bags=4, n=500)
        model = stack_aggregated(vm, vy)
        assert len(model.units) == 5
        s = auc(model.predict(tm), ty)
        assert 0 <= s <= 1
        diffs.append(s - auc(tm.values.mean(axis=1), ty))
    assert np.median(diffs) >= 0


def test_meta_weights_single_feature(rng):
    y = np.r_[0, 1, rng.integers(0, 2, 30)]
    model = stack_all(as_pm(rng.random((32, 1)), ["only"]), y)
    norm, raw = meta_weights(model)
    assert norm == {"only": 1.0} and set(raw) == {"only"}


def test_meta_weights_arithmetic():
    lm = LogisticModel(np.array([2.0, -1.0, 1.0]), 0.0, 1e-3, True, 0)
    model = EnsembleModel("logistic_meta", (("a", 0.5), ("b", 0.25), ("c", 0.25)), lm)
    norm, raw = meta_weights(model)
    assert norm == {"a": 0.5, "b": 0.25, "c": 0.25}
    assert raw == {"a": 2.0, "b": -1.0, "c": 1.0}


def test_meta_weights_rejects_weighted_mean():
    with pytest.raises(ValidationError):
        meta_weights(EnsembleModel("weighted_mean", (("a", 1.0),)))


def test_published_magnitude_profile_is_realisable():
    listed = {"rf": 0.25, "gbm": 0.20, "MultilayerPerceptron": 0.09, "SGD": 0.09, "VFI": 0.11, "IBk": 0.09}
    rest = 1 - sum(listed.values())
    units = list(listed) + ["other"]
    # signs are free: only magnitudes enter the normalised view
    coef = np.array([0.25, -0.20, 0.09, -0.09, 0.11, 0.09, rest]) * 7.3
    norm = _normalise_abs(units, coef)
    for u, v in listed.items():
        assert norm[u] == pytest.approx(v, abs=1e-12)


def test_subsample_rows_is_stratified():
    y = np.r_[np.ones(30), np.zeros(70)].astype(int)
    rows = subsample_rows(y, 0.1, seed=0)
    assert rows.size == 10 and y[rows].sum() == 3
    assert np.array_equal(rows, subsample_rows(y, 0.1, seed=0))
    assert np.array_equal(subsample_rows(y, 1.0, seed=0), np.arange(100))


def test_stacking_classifier(val_test_pool):
    (vm, vy), (tm, ty) = val_test_pool
    est = StackingClassifier(mode="aggregated").fit(vm, vy)
    assert sum(est.weights_.values()) == pytest.approx(1.0)
    assert est.predict_proba(tm).shape == (tm.n_instances, 2)
    sub = StackingClassifier(mode="all", val_fraction=0.5, random_state=3).fit(vm, vy)
    assert len(sub.coef_) == vm.n_classifiers
    with pytest.raises(ValueError):
        StackingClassifier(mode="bogus").fit(vm, vy)
