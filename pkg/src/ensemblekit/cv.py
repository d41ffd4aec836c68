"""Cross-validation topology, native base learners and the end-to-end pipeline.

Each outer training split is bootstrapped ``bags`` times and every bootstrap
sample is undersampled to exact class balance before a learner sees it.
Nested folds inside the training split produce out-of-fold validation
predictions, which are the only data the ensemble methods are fitted on.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.tree import DecisionTreeClassifier

from .combine import MeanAggregator, bag_aggregate
from .core import MethodReport, PredictionMatrix, ValidationError, validate_labels
from .cluster import ClusterStacking
from .metrics import auc, brier
from .select import CESSelector, GreedySelector
from .stack import StackingClassifier, fit_logistic, subsample_rows

log = logging.getLogger(__name__)

__all__ = [
    "Fold",
    "NestedFold",
    "FoldPlan",
    "stratified_folds",
    "make_fold_plan",
    "make_learner",
    "LEARNERS",
    "FoldData",
    "PipelineOutput",
    "run_pipeline",
    "make_method",
    "METHODS",
    "evaluate",
    "default_workers",
]


def default_workers() -> int:
    env = os.environ.get("ENSEMBLEKIT_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ---------------------------------------------------------------- fold plan


def stratified_folds(labels: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split positions into ``k`` folds with near-proportional class counts.

    Each class is shuffled and dealt round-robin; the deal continues where
    the previous class stopped so fold sizes also differ by at most one.
    """
    fold_of = np.empty(labels.size, dtype=np.intp)
    offset = 0
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        fold_of[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return [np.flatnonzero(fold_of == f) for f in range(k)]


def _balanced_bag(pool: np.ndarray, labels: np.ndarray, rng: np.random.Generator):
    """Bootstrap ``pool`` then drop random majority draws down to the minority count."""
    for _ in range(1000):
        boot = rng.choice(pool, size=pool.size, replace=True)
        pos = boot[labels[boot] == 1]
        neg = boot[labels[boot] == 0]
        if pos.size and neg.size:
            break
    else:
        raise ValidationError("bootstrap samples keep missing a class; split too small")
    n_min = min(pos.size, neg.size)
    if pos.size > n_min:
        pos = pos[np.sort(rng.choice(pos.size, size=n_min, replace=False))]
    if neg.size > n_min:
        neg = neg[np.sort(rng.choice(neg.size, size=n_min, replace=False))]
    return boot, np.sort(np.concatenate([pos, neg]))


@dataclass(frozen=True)
class NestedFold:
    train: np.ndarray
    test: np.ndarray
    bags: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    test: np.ndarray
    bootstraps: tuple[np.ndarray, ...]
    bags: tuple[np.ndarray, ...]  # undersampled, class-balanced
    nested: tuple[NestedFold, ...]


@dataclass(frozen=True)
class FoldPlan:
    """Complete CV topology over positions ``0..n-1`` of the labelled rows."""

    n: int
    outer_k: int
    nested_k: int
    bags_per_split: int
    seed: int
    folds: tuple[Fold, ...]

    def to_dict(self) -> dict:
        arr = lambda a: [int(v) for v in a]  # noqa: E731
        return {
            "n": self.n, "outer_k": self.outer_k, "nested_k": self.nested_k,
            "bags_per_split": self.bags_per_split, "seed": self.seed,
            "folds": [
                {
                    "train": arr(f.train), "test": arr(f.test),
                    "bootstraps": [arr(b) for b in f.bootstraps],
                    "bags": [arr(b) for b in f.bags],
                    "nested": [
                        {"train": arr(v.train), "test": arr(v.test), "bags": [arr(b) for b in v.bags]}
                        for v in f.nested
                    ],
                }
                for f in self.folds
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def audit(self, labels) -> list[str]:
        """Return every violated invariant (empty when the plan is sound)."""
        y = np.asarray(labels)
        problems = []
        tests = np.concatenate([f.test for f in self.folds])
        if not np.array_equal(np.sort(tests), np.arange(self.n)):
            problems.append("outer test sets do not partition the instances")
        for fi, f in enumerate(self.folds):
            test = set(f.test.tolist())
            if set(f.train.tolist()) & test:
                problems.append(f"fold {fi}: train overlaps test")
            for name, sets in (("bootstrap", f.bootstraps), ("bag", f.bags)):
                for b, s in enumerate(sets):
                    if set(s.tolist()) & test:
                        problems.append(f"fold {fi}: {name} {b} overlaps test")
            for b, s in enumerate(f.bags):
                if int(np.sum(y[s] == 1)) != int(np.sum(y[s] == 0)):
                    problems.append(f"fold {fi}: bag {b} not class-balanced")
            held = np.concatenate([v.test for v in f.nested]) if f.nested else np.array([], int)
            if not np.array_equal(np.sort(held), np.sort(f.train)):
                problems.append(f"fold {fi}: nested held-out sets do not partition the training split")
            for vi, v in enumerate(f.nested):
                vt = set(v.test.tolist())
                if (set(v.train.tolist()) | vt) & test:
                    problems.append(f"fold {fi}/nested {vi}: touches the outer test set")
                if set(v.train.tolist()) & vt:
                    problems.append(f"fold {fi}/nested {vi}: train overlaps held-out")
                for b, s in enumerate(v.bags):
                    if set(s.tolist()) & (vt | test):
                        problems.append(f"fold {fi}/nested {vi}: bag {b} leaks held-out rows")
                    if int(np.sum(y[s] == 1)) != int(np.sum(y[s] == 0)):
                        problems.append(f"fold {fi}/nested {vi}: bag {b} not class-balanced")
        return problems


def make_fold_plan(labels, outer_k: int = 10, nested_k: int = 5, bags: int = 10, seed: int = 0) -> FoldPlan:
    """Stratified outer folds, balanced bootstrap bags and nested folds."""
    y = validate_labels(labels)
    if outer_k < 2 or nested_k < 2:
        raise ValidationError("outer_k and nested_k must be >= 2")
    if bags < 1:
        raise ValidationError("bags must be >= 1")
    counts = np.bincount(y, minlength=2)
    if counts.min() < outer_k:
        raise ValidationError(
            f"class too small to stratify: {int(counts.min())} members for {outer_k} folds"
        )
    ss = np.random.SeedSequence(seed)
    outer_ss, *fold_ss = ss.spawn(outer_k + 1)
    tests = stratified_folds(y, outer_k, np.random.default_rng(outer_ss))
    folds = []
    for f, test in enumerate(tests):
        rng = np.random.default_rng(fold_ss[f])
        train = np.setdiff1d(np.arange(y.size), test)
        if np.bincount(y[train], minlength=2).min() < nested_k:
            raise ValidationError(f"fold {f}: class too small for {nested_k} nested folds")
        boots, bal = zip(*(_balanced_bag(train, y, rng) for _ in range(bags)))
        nested = []
        for held in stratified_folds(y[train], nested_k, rng):
            v_test = train[held]
            v_train = np.setdiff1d(train, v_test)
            v_bags = tuple(_balanced_bag(v_train, y, rng)[1] for _ in range(bags))
            nested.append(NestedFold(v_train, v_test, v_bags))
        folds.append(Fold(train, test, tuple(boots), tuple(bal), tuple(nested)))
    return FoldPlan(int(y.size), outer_k, nested_k, bags, int(seed), tuple(folds))


# ---------------------------------------------------------------- learners


class _LogisticLearner:
    """Standardised-feature logistic regression on the stacking fitter."""

    def __init__(self, lam: float = 1e-2, random_state=None):
        self.lam = lam
        self.random_state = random_state

    def fit(self, X, y):
        self.mu_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd_ = np.where(sd > 0, sd, 1.0)
        self.model_ = fit_logistic((X - self.mu_) / self.sd_, y, lam=self.lam)
        return self

    def predict_proba(self, X):
        p = self.model_.predict((X - self.mu_) / self.sd_)
        return np.column_stack([1 - p, p])


def _logistic(seed):
    return _LogisticLearner()


LEARNERS: dict[str, Callable[[int], object]] = {
    "logistic": _logistic,
    "tree": lambda seed: DecisionTreeClassifier(criterion="gini", max_depth=5, random_state=seed),
    "knn": lambda seed: KNeighborsClassifier(n_neighbors=5, weights="distance"),
    "nb": lambda seed: GaussianNB(),
}


def make_learner(name: str, seed: int = 0):
    try:
        return LEARNERS[name](seed)
    except KeyError:
        raise ValidationError(f"unknown learner {name!r}; choose from {sorted(LEARNERS)}") from None


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class FoldData:
    val: PredictionMatrix
    val_labels: np.ndarray
    test: PredictionMatrix
    test_labels: np.ndarray
    unlabeled: PredictionMatrix | None = None


@dataclass
class PipelineOutput:
    folds: list[FoldData]
    groups: dict[str, str]
    dropped: list[str] = field(default_factory=list)


def _fit_predict(learner_name, seed, X, y, train_idx, predict_idx):
    model = make_learner(learner_name, seed)
    model.fit(X[train_idx], y[train_idx])
    p = np.asarray(model.predict_proba(X[predict_idx]))[:, 1]
    return np.clip(p, 0.0, 1.0)


def run_pipeline(X, y, learners: Sequence[str], plan: FoldPlan, instance_ids=None,
                 workers: int | None = None) -> PipelineOutput:
    """Train every learner on every balanced bag and assemble prediction matrices.

    ``y`` may contain -1 for prediction-only rows; those rows are excluded
    from the plan (which indexes labelled rows in order) and scored by the
    outer-fold models.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    ids = list(instance_ids) if instance_ids is not None else [str(i) for i in range(len(y))]
    labelled = np.flatnonzero(y >= 0)
    unlabeled = np.flatnonzero(y < 0)
    yl = validate_labels(y[labelled])
    Xl = X[labelled]
    if plan.n != yl.size:
        raise ValidationError(f"plan covers {plan.n} rows, dataset has {yl.size} labelled rows")
    learners = list(learners)
    if len(set(learners)) != len(learners):
        raise ValidationError("duplicate learner names")
    for name in learners:
        make_learner(name)
    X_all = np.vstack([Xl, X[unlabeled]])
    unl_rows = np.arange(labelled.size, labelled.size + unlabeled.size)

    # one task per (fold, nested fold or outer, learner, bag); seeds derived up front
    tasks = []
    seeds = np.random.SeedSequence(plan.seed).spawn(1)[0].generate_state(
        plan.outer_k * (plan.nested_k + 1) * len(learners) * plan.bags_per_split
    )
    s = 0
    for f, fold in enumerate(plan.folds):
        predict_outer = np.concatenate([fold.test, unl_rows])
        for li, name in enumerate(learners):
            for b in range(plan.bags_per_split):
                tasks.append(((f, -1, li, b), name, int(seeds[s]), fold.bags[b], predict_outer))
                s += 1
                for v, nf in enumerate(fold.nested):
                    tasks.append(((f, v, li, b), name, int(seeds[s]), nf.bags[b], nf.test))
                    s += 1

    def run(task):
        key, name, seed, tr, pr = task
        try:
            return key, _fit_predict(name, seed, X_all, np.r_[yl, np.zeros(unl_rows.size, np.int8)], tr, pr), None
        except Exception as exc:  # recorded per column, column dropped
            return key, None, exc

    workers = default_workers() if workers is None else max(1, workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    by_key = {key: (pred, err) for key, pred, err in results}

    col_ids = [f"{name}_b{b}" for name in learners for b in range(plan.bags_per_split)]
    groups = {f"{name}_b{b}": name for name in learners for b in range(plan.bags_per_split)}
    folds_out, dropped = [], []
    for f, fold in enumerate(plan.folds):
        keep, test_cols, val_cols, unl_cols = [], [], [], []
        for li, name in enumerate(learners):
            for b in range(plan.bags_per_split):
                cid = f"{name}_b{b}"
                keys = [(f, -1, li, b)] + [(f, v, li, b) for v in range(len(fold.nested))]
                errs = [by_key[k][1] for k in keys if by_key[k][1] is not None]
                if errs:
                    log.warning("fold %d: dropping column %s: %s", f, cid, errs[0])
                    dropped.append(f"fold{f}:{cid}")
                    continue
                outer = by_key[(f, -1, li, b)][0]
                test_cols.append(outer[: fold.test.size])
                unl_cols.append(outer[fold.test.size:])
                val = np.empty(fold.train.size)
                pos = {r: i for i, r in enumerate(fold.train)}
                for v, nf in enumerate(fold.nested):
                    val[[pos[r] for r in nf.test]] = by_key[(f, v, li, b)][0]
                val_cols.append(val)
                keep.append(cid)
        if not keep:
            raise ValidationError(f"fold {f}: every learner failed")
        g = {c: groups[c] for c in keep}
        lab_ids = [ids[i] for i in labelled]
        test_m = PredictionMatrix(np.column_stack(test_cols), tuple(keep),
                                  tuple(lab_ids[i] for i in fold.test), g)
        val_m = PredictionMatrix(np.column_stack(val_cols), tuple(keep),
                                 tuple(lab_ids[i] for i in fold.train), g)
        unl_m = None
        if unlabeled.size:
            unl_m = PredictionMatrix(np.column_stack(unl_cols), tuple(keep),
                                     tuple(ids[i] for i in unlabeled), g)
        folds_out.append(FoldData(val_m, yl[fold.train], test_m, yl[fold.test], unl_m))
    return PipelineOutput(folds_out, {c: groups[c] for c in col_ids}, dropped)


# ---------------------------------------------------------------- methods


def _int_or_range(v):
    if isinstance(v, str) and ".." in v:
        lo, hi = v.split("..")
        return range(int(lo), int(hi) + 1)
    return v


METHODS = {
    # reference row scored directly by ``evaluate``; there is nothing to fit
    "best_base": None,
    "mean": lambda **kw: MeanAggregator(),
    "greedy": lambda max_size=None, **kw: GreedySelector(max_size=max_size),
    "ces": lambda init_n=2, max_size=100, with_replacement=True, candidate_fraction=1.0, seed=None, **kw:
        CESSelector(init_n=init_n, max_size=max_size, with_replacement=with_replacement,
                    candidate_fraction=candidate_fraction, random_state=seed),
    "stack_all": lambda lam=1e-3, **kw: StackingClassifier(mode="all", lam=lam),
    "stack_aggregated": lambda lam=1e-3, **kw: StackingClassifier(mode="aggregated", lam=lam),
    "intra": lambda k=2, distance="pearson", lam=1e-3, **kw:
        ClusterStacking(mode="intra", k=_int_or_range(k), distance=distance, lam=lam),
    "inter": lambda k=2, distance="pearson", lam=1e-3, **kw:
        ClusterStacking(mode="inter", k=_int_or_range(k), distance=distance, lam=lam),
}


def make_method(name: str, **params):
    if name not in METHODS:
        raise ValidationError(f"unknown method {name!r}; choose from {sorted(METHODS)}")
    if METHODS[name] is None:
        raise ValidationError(f"{name!r} has no estimator; use evaluate()")
    return METHODS[name](**params)


def _fold_weights(est) -> dict[str, float]:
    return dict(getattr(est, "weights_", {}) or {})


def evaluate(method: str, output: PipelineOutput, params: dict | None = None, dataset: str = "dataset",
             val_fraction: float = 1.0, seed: int = 0) -> MethodReport:
    """Fit ``method`` per fold on validation data and score the pooled test predictions."""
    params = dict(params or {})
    start = time.perf_counter()
    if method == "best_base":
        # a reference row chosen on test data by definition
        y_test = np.concatenate([f.test_labels for f in output.folds])
        # bagged predictions averaged per learner before scoring
        aggs = [bag_aggregate(f.test) for f in output.folds]
        names = aggs[0].classifier_ids
        best, best_auc, best_scores = None, -1.0, None
        for name in names:
            scores = np.concatenate([a.column(name) for a in aggs])
            a = auc(scores, y_test)
            if a > best_auc:
                best, best_auc, best_scores = name, a, scores
        return MethodReport("best_base", dataset, best_auc, brier(best_scores, y_test),
                            {best: 1.0}, [], 1, time.perf_counter() - start)

    scores, weights, trajs, sizes = [], [], [], []
    for f, fold in enumerate(output.folds):
        est = make_method(method, **params)
        val, yv = fold.val, fold.val_labels
        if val_fraction < 1:
            rows = subsample_rows(yv, val_fraction, np.random.SeedSequence([seed, f]))
            val, yv = val.take_rows(rows), yv[rows]
        if "random_state" in est.get_params() and est.random_state is None:
            est.set_params(random_state=int(np.random.SeedSequence([seed, f, 1]).generate_state(1)[0]))
        est.fit(val, yv)
        scores.append(est.predict_proba(fold.test)[:, 1])
        weights.append(_fold_weights(est))
        if hasattr(est, "trajectory_"):
            trajs.append(est.trajectory_.aucs)
            sizes.append(est.best_size_)
        elif hasattr(est, "k_"):
            sizes.append(est.k_)
    pooled = np.concatenate(scores)
    # test labels are read only after every fold's method is fitted
    y_test = np.concatenate([f.test_labels for f in output.folds])
    keys = sorted({k for w in weights for k in w})
    mean_w = {k: float(np.mean([w.get(k, 0.0) for w in weights])) for k in keys}
    traj = []
    if trajs:
        length = min(len(t) for t in trajs)
        traj = list(np.mean([t[:length] for t in trajs], axis=0))
    size = int(np.median(sizes)) if sizes else None
    return MethodReport(method, dataset, auc(pooled, y_test), brier(pooled, y_test),
                        mean_w, traj, size, time.perf_counter() - start)
