import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ensemblekit.core import ContingencyTable, PredictionMatrix, ValidationError
from ensemblekit.metrics import (
    auc,
    brier,
    cohen_kappa,
    correlation_distance,
    correlation_distance_matrix,
    diversity_matrix,
    mean_pairwise_profile,
    pair_diversity,
    threshold_labels,
    yule_q,
)
from oracles import brute_auc, brute_contingency


# ---- AUC

def test_auc_perfect_separation():
    assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0


def test_auc_all_ties():
    assert auc([0.5] * 4, [1, 0, 1, 0]) == 0.5


def test_auc_two_of_four_pairs():
    # positives 0.8, 0.2 vs negatives 0.4, 0.6: 0.8 wins twice, 0.2 loses twice
    assert brute_auc([0.8, 0.4, 0.6, 0.2], [1, 0, 0, 1]) == 0.5
    assert auc([0.8, 0.4, 0.6, 0.2], [1, 0, 0, 1]) == 0.5


def test_auc_single_class_errors():
    with pytest.raises(ValidationError, match="AUC undefined"):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 500), seed=st.integers(0, 2**31), levels=st.sampled_from([3, 10, 0]))
def test_auc_equals_pair_count(n, seed, levels):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    s = rng.random(n) if levels == 0 else rng.integers(0, levels, n) / levels
    assert abs(auc(s, y) - brute_auc(s, y)) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.1, 10), shift=st.floats(-5, 5))
def test_auc_invariant_to_logit_affine(seed, scale, shift):
    rng = np.random.default_rng(seed)
    y = np.r_[0, 1, rng.integers(0, 2, 60)]
    s = rng.random(62) * 0.98 + 0.01
    t = 1 / (1 + np.exp(-(scale * np.log(s / (1 - s)) + shift)))
    # strictly increasing transform keeps ranks unless it collapses values in float
    if np.unique(t).size == np.unique(s).size:
        assert auc(t, y) == auc(s, y)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_auc_label_flip_complements(seed):
    rng = np.random.default_rng(seed)
    y = np.r_[0, 1, rng.integers(0, 2, 40)]
    s = rng.integers(0, 5, 42) / 5
    assert abs(auc(s, y) + auc(s, 1 - y) - 1) <= 1e-12


# ---- Brier

def test_brier_examples():
    assert brier([1.0, 0.0, 1.0], [1, 0, 1]) == 0.0
    assert brier([0.5] * 5, [1, 0, 0, 1, 1]) == 0.25
    # (0.2^2 + 0.3^2) / 2
    assert brier([0.8, 0.3], [1, 0]) == pytest.approx(0.065, abs=1e-15)


def test_brier_empty_errors():
    with pytest.raises(ValidationError):
        brier([], [])


@settings(max_examples=50, deadline=None)
@given(c=st.floats(0, 1), seed=st.integers(0, 2**31))
def test_brier_constant_predictor(c, seed):
    y = np.random.default_rng(seed).integers(0, 2, 37)
    pi = y.mean()
    assert abs(brier(np.full(37, c), y) - (pi * (1 - c) ** 2 + (1 - pi) * c**2)) <= 1e-12


# ---- thresholding and Q

def test_threshold_is_strict():
    assert threshold_labels([0.7, 0.5, 0.2]).tolist() == [1, 0, 0]
    assert threshold_labels([0.0, 0.0]).tolist() == [0, 0]
    assert threshold_labels([0.5000001]).tolist() == [1]


def test_identical_predictions_have_no_diversity():
    y = [1, 0, 1, 0]
    p = [0.9, 0.1, 0.2, 0.8]  # correct, correct, wrong, wrong
    d = pair_diversity(p, p, y)
    assert (d.table.n11, d.table.n00) == (2, 2)
    assert d.q == 1.0 and d.q_adjusted == 0.0


def test_complementary_predictions():
    y = [1, 1, 0, 0]
    a = [0.9, 0.1, 0.1, 0.9]
    b = [0.1, 0.9, 0.9, 0.1]
    d = pair_diversity(a, b, y)
    assert d.table == ContingencyTable(0, 2, 2, 0)
    assert d.q == -1.0 and d.q_adjusted == 0.0


def test_q_from_table():
    q, degenerate = yule_q(ContingencyTable(n11=2, n10=1, n01=1, n00=1))
    assert q == pytest.approx(1 / 3) and not degenerate
    y = [1, 1, 1, 1, 1]
    a = [0.9, 0.9, 0.9, 0.1, 0.1]
    b = [0.9, 0.9, 0.1, 0.9, 0.1]
    d = pair_diversity(a, b, y)
    assert d.table == ContingencyTable(2, 1, 1, 1)
    assert d.q_adjusted == pytest.approx(2 / 3)


def test_degenerate_q_is_zero_and_flagged():
    d = pair_diversity([0.9, 0.9], [0.9, 0.1], [1, 1])
    assert d.q == 0.0 and d.degenerate and d.q_adjusted == 1.0


def test_self_q_is_one_when_both_cells_filled(rng):
    y = rng.integers(0, 2, 50)
    p = rng.random(50)
    t = pair_diversity(p, p, y).table
    if t.n11 > 0 and t.n00 > 0:
        assert pair_diversity(p, p, y).q == 1.0


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_kappa_and_q_share_sign(seed):
    rng = np.random.default_rng(seed)
    t = ContingencyTable(*map(int, rng.integers(0, 20, 4)))
    q, degenerate = yule_q(t)
    if degenerate or t.total == 0:
        return
    k = cohen_kappa(t)
    assert np.sign(round(k, 12)) == np.sign(round(q, 12))


def test_pair_diversity_length_mismatch():
    with pytest.raises(ValidationError):
        pair_diversity([0.1, 0.2], [0.1], [0, 1])


def test_q_matches_independent_contingency(rng):
    for _ in range(50):
        n = int(rng.integers(5, 200))
        y, a, b = rng.integers(0, 2, n), rng.random(n), rng.random(n)
        n11, n10, n01, n00 = brute_contingency(a, b, y)
        den = n11 * n00 + n01 * n10
        expected = (n11 * n00 - n01 * n10) / den if den else 0.0
        assert pair_diversity(a, b, y).q == pytest.approx(expected, abs=1e-15)


# ---- diversity matrix

def test_diversity_matrix_identical_columns():
    m = PredictionMatrix.from_array(np.array([[0.9, 0.9], [0.2, 0.2], [0.7, 0.7], [0.1, 0.1]]))
    assert np.array_equal(diversity_matrix(m, [1, 0, 0, 1]), np.zeros((2, 2)))


def test_diversity_matrix_matches_pair_loop(rng):
    y = rng.integers(0, 2, 50)
    v = rng.random((50, 3))
    d = diversity_matrix(PredictionMatrix.from_array(v), y)
    for i in range(3):
        for j in range(3):
            expected = 0.0 if i == j else pair_diversity(v[:, i], v[:, j], y).q_adjusted
            assert d[i, j] == expected
    assert np.array_equal(d, d.T)


def test_diversity_matrix_duplicated_block(rng):
    y = rng.integers(0, 2, 40)
    v = rng.random((40, 3))
    d = diversity_matrix(PredictionMatrix.from_array(np.hstack([v, v])), y)
    assert np.array_equal(d[:3, :3], d[3:, 3:])
    off = d[:3, 3:].copy()
    np.fill_diagonal(off, 0)
    assert np.array_equal(off, d[:3, :3])


# ---- correlation distance

def test_correlation_distance_examples():
    c = np.array([0.1, 0.5, 0.3, 0.9])
    assert correlation_distance(c, c) == pytest.approx(0.0, abs=1e-15)
    assert correlation_distance(c, 1 - c) == pytest.approx(0.0, abs=1e-15)
    assert correlation_distance([1, 2, 3, 4], [1, 2, 2, 1]) == 1.0


def test_constant_column_is_maximally_distant():
    assert correlation_distance([0.3, 0.3, 0.3], [0.1, 0.2, 0.5]) == 1.0
    d = correlation_distance_matrix(np.array([[0.3, 0.1], [0.3, 0.2], [0.3, 0.5]]))
    assert d[0, 1] == 1.0 and d[0, 0] == 0.0


def test_correlation_matrix_matches_pairwise(rng):
    v = rng.random((30, 5))
    d = correlation_distance_matrix(v)
    for i in range(5):
        for j in range(5):
            if i != j:
                assert d[i, j] == pytest.approx(correlation_distance(v[:, i], v[:, j]), abs=1e-12)


# ---- profile

def test_profile_two_columns(rng):
    y = rng.integers(0, 2, 30)
    v = rng.random((30, 2))
    prof = mean_pairwise_profile(PredictionMatrix.from_array(v), y)
    pair = pair_diversity(v[:, 0], v[:, 1], y).q_adjusted
    assert [p["diversity"] for p in prof] == [pair, pair]


def test_profile_matches_row_means(small_pool):
    m, y = small_pool
    sub = m.select_columns(list(m.classifier_ids[:5]))
    prof = {p["classifier"]: p for p in mean_pairwise_profile(sub, y)}
    div = diversity_matrix(sub, y)
    for j, cid in enumerate(sub.classifier_ids):
        assert prof[cid]["diversity"] == pytest.approx(div[j].sum() / 4, abs=1e-15)
        assert prof[cid]["auc"] == pytest.approx(brute_auc(sub.values[:, j], y), abs=1e-12)
    divs = [p["diversity"] for p in mean_pairwise_profile(sub, y)]
    assert divs == sorted(divs)


def test_profile_of_cloned_pool(small_pool):
    m, y = small_pool
    v = m.values[:, :3]
    ids = ["a", "b", "c", "a2", "b2", "c2"]
    prof = {p["classifier"]: p for p in mean_pairwise_profile(PredictionMatrix.from_array(np.hstack([v, v]), ids), y)}
    for c in "abc":
        assert prof[c]["diversity"] == prof[c + "2"]["diversity"]
        assert prof[c]["auc"] == prof[c + "2"]["auc"]
