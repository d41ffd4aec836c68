"""Command-line interface.

Exit codes: 0 success, 2 malformed arguments or config, 3 data errors
(unreadable or invalid input files), 4 method errors (fitting or scoring
failed).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import io
from .cluster import sweep_k
from .combine import bag_aggregate
from .core import ValidationError
from .cv import METHODS, default_workers, evaluate, make_fold_plan, run_pipeline
from .datagen import generate, make_pool_spec
from .metrics import auc, brier, diversity_matrix
from .select import CesParams, ces_select, greedy_select
from .stack import meta_weights, stack_aggregated, stack_all, subsample_rows
from .stats import friedman, group_letters, iman_davenport, nemenyi

log = logging.getLogger("ensemblekit")

EXIT_CONFIG, EXIT_DATA, EXIT_METHOD = 2, 3, 4


class ConfigError(Exception):
    pass


class MethodError(Exception):
    pass


@contextmanager
def method_stage(what: str):
    """Re-raise anything that fails inside a fitting/scoring step as a MethodError."""
    try:
        yield
    except MethodError:
        raise
    except Exception as exc:
        raise MethodError(f"{what}: {exc}") from exc


# ---------------------------------------------------------------- helpers

_NOT_HASHED = {"out", "workers", "verbose", "func"}


def config_comment(args: argparse.Namespace, extra: dict | None = None, seed=None) -> str:
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_HASHED}
    if extra:
        cfg.update(extra)
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    digest = hashlib.sha256(blob).hexdigest()[:16]
    seed = getattr(args, "seed", None) if seed is None else seed
    return f"ensemblekit {args.command} config_sha256={digest} seed={seed}"


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _k_range(text: str) -> list[int]:
    try:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected k_min..k_max, got {text!r}")


def _load(args, prefix: str = ""):
    preds = getattr(args, f"{prefix}predictions")
    labels = getattr(args, f"{prefix}labels")
    groups = getattr(args, "groups", None)
    matrix = io.read_predictions(preds, groups, clip=getattr(args, "clip", False))
    y = io.read_labels(labels, matrix.instance_ids)
    return matrix, y


def _load_test(args):
    if not getattr(args, "test_predictions", None):
        return None, None
    if not args.test_labels:
        raise ConfigError("--test-predictions requires --test-labels")
    matrix = io.read_predictions(args.test_predictions, args.groups, clip=args.clip)
    return matrix, io.read_labels(args.test_labels, matrix.instance_ids)


def _score_test(args, out, model_predict, test, yt, comment, name):
    if test is None:
        return
    with method_stage("scoring test data"):
        p = model_predict(test)
        a, b = auc(p, yt), brier(p, yt)
    io.write_table(out / f"{name}_test_scores.csv", ["instance_id", "score"],
                   zip(test.instance_ids, map(float, p)), comment)
    io.write_table(out / f"{name}_test_summary.csv", ["test_auc", "brier"], [(a, b)], comment)
    print(f"test_auc={a:.6f} brier={b:.6f}")


# ---------------------------------------------------------------- subcommands


def cmd_synth(args) -> int:
    m = args.classifiers
    signal = args.signal or [1.0]
    loading = args.shared_loading or [0.0]
    def widen(v):
        return v * m if len(v) == 1 else v
    try:
        spec = make_pool_spec(
            args.n_instances, args.positive_rate, widen(signal), widen(loading),
            widen(args.alpha) if args.alpha else None, widen(args.beta) if args.beta else None,
            bags=args.bags, seed=args.seed,
        )
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    out = _out_dir(args)
    comment = config_comment(args)
    matrix, y, oracle = generate(spec)
    io.write_predictions(out / "predictions.csv", matrix, comment)
    io.write_labels(out / "labels.csv", matrix.instance_ids, y, comment)
    io.write_groups(out / "groups.tsv", matrix.group_of, comment)
    spec_echo = json.dumps({k: v for k, v in vars(spec).items()}, sort_keys=True)
    io.write_table(out / "oracle.csv", ["instance_id", "bayes_posterior"],
                   zip(matrix.instance_ids, map(float, oracle.posterior)),
                   comment + "\nspec " + spec_echo)
    return 0


def cmd_select(args) -> int:
    matrix, y = _load(args)
    test, yt = _load_test(args)
    out = _out_dir(args)
    comment = config_comment(args)
    with method_stage(f"{args.method} selection"):
        if args.method == "greedy":
            traj = greedy_select(matrix, y, min(args.max_size, matrix.n_classifiers))
        else:
            params = CesParams(args.init_n, args.max_size, not args.no_replacement,
                               args.candidate_fraction, args.seed)
            traj, _ = ces_select(matrix, y, params)
        best = traj.best_iteration()
        model = traj.model_at(best)
    io.write_table(out / "trajectory.csv", ["iteration", "chosen", "val_auc", "mean_diversity", "brier"],
                   traj.rows(), comment)
    io.write_table(out / "weights.csv", ["classifier", "weight_c"],
                   model.members, comment + f"\nbest_iteration={best}")
    _score_test(args, out, model.predict, test, yt, comment, args.method)
    return 0


def cmd_stack(args) -> int:
    matrix, y = _load(args)
    test, yt = _load_test(args)
    out = _out_dir(args)
    comment = config_comment(args)
    with method_stage("stacking"):
        rows = subsample_rows(y, args.val_fraction, args.seed)
        fit_m, fit_y = matrix.take_rows(rows), y[rows]
        fit = stack_all if args.mode == "all" else stack_aggregated
        model = fit(fit_m, fit_y, lam=args.lam)
        norm, raw = meta_weights(model)
    io.write_table(out / "meta_weights.csv", ["unit", "weight_m", "coefficient"],
                   [(u, norm[u], raw[u]) for u in model.units],
                   comment + f"\nintercept={model.meta.intercept!r} converged={model.meta.converged}")
    _score_test(args, out, model.predict, test, yt, comment, f"stack_{args.mode}")
    return 0


def cmd_cluster_stack(args) -> int:
    matrix, y = _load(args)
    test, yt = _load_test(args)
    out = _out_dir(args)
    comment = config_comment(args)
    ks = args.sweep if args.sweep else [args.k]
    with method_stage("cluster stacking"):
        res = sweep_k(matrix, y, args.mode, ks, distance=args.distance, lam=args.lam)
    io.write_table(out / "sweep.csv", ["k", "val_auc"], sorted(res.aucs.items()),
                   comment + f"\nbest_k={res.best_k}")
    best = res.models[res.best_k]
    io.write_table(out / "assignment.csv", ["classifier", "cluster"], best.assignment.items(), comment)
    _score_test(args, out, best.predict, test, yt, comment, f"{args.mode}_cluster")
    return 0


def cmd_diversity(args) -> int:
    matrix, y = _load(args)
    out = _out_dir(args)
    comment = config_comment(args)
    if args.aggregate:
        matrix = bag_aggregate(matrix)
    with method_stage("diversity"):
        div = diversity_matrix(matrix, y)
        ind = np.array([auc(matrix.values[:, j], y) for j in range(matrix.n_classifiers)])
        top = set(np.argsort(-ind, kind="stable")[: args.top_n].tolist())
        rows = []
        m = matrix.n_classifiers
        for i in range(m):
            for j in range(i + 1, m):
                pair = (matrix.values[:, i] + matrix.values[:, j]) / 2.0
                rows.append((matrix.classifier_ids[i], matrix.classifier_ids[j], float(div[i, j]),
                             auc(pair, y), int(i in top or j in top)))
    io.write_table(out / "diversity.csv",
                   ["classifier_a", "classifier_b", "q_adjusted", "pair_mean_auc", "either_is_top_performer"],
                   rows, comment)
    return 0


def cmd_calibration(args) -> int:
    matrix, y = _load(args)
    out = _out_dir(args)
    comment = config_comment(args)
    rows = []
    with method_stage("calibration"):
        base = bag_aggregate(matrix) if args.aggregate else matrix
        for j, cid in enumerate(base.classifier_ids):
            rows.append(("base", cid, brier(base.values[:, j], y), auc(base.values[:, j], y)))
        traj, _ = ces_select(matrix, y, CesParams(args.init_n, args.max_size, True, 1.0, args.seed))
        rows += [("ces", str(r.iteration), r.brier, r.val_auc) for r in traj.records]
        g = greedy_select(matrix, y)
        rows += [("greedy", str(r.iteration), r.brier, r.val_auc) for r in g.records]
        st = stack_aggregated(matrix, y, lam=args.lam)
        p = st.predict(matrix)
        rows.append(("stack_aggregated", "final", brier(p, y), auc(p, y)))
    io.write_table(out / "calibration.csv", ["series", "item", "brier", "auc"], rows, comment)
    return 0


def _read_perf(path):
    import csv

    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    rows = list(csv.reader(lines))
    if not rows or rows[0][0].strip() != "method":
        raise ValidationError(f"{path}: header must be 'method,<dataset...>'")
    datasets = [d.strip() for d in rows[0][1:]]
    methods, perf = [], []
    for r, row in enumerate(rows[1:]):
        if len(row) != len(datasets) + 1:
            raise ValidationError(f"{path}: dimension mismatch at row {r}")
        methods.append(row[0].strip())
        try:
            perf.append([float(v) for v in row[1:]])
        except ValueError:
            raise ValidationError(f"{path}: non-numeric value at row {r}") from None
    return methods, datasets, np.array(perf)


def cmd_compare(args) -> int:
    methods, datasets, perf = _read_perf(args.input)
    out = _out_dir(args)
    comment = config_comment(args)
    with method_stage("Friedman/Nemenyi"):
        stat, p, rt = friedman(perf, methods, datasets)
        ph = nemenyi(rt, args.alpha)
        letters = group_letters(rt, ph.cd)
    head = ["statistic", "p_value", "k", "n", "critical_difference"]
    row = [stat, p, rt.k, rt.n, ph.cd]
    if args.iman_davenport:
        f, fp = iman_davenport(stat, rt.k, rt.n)
        head += ["iman_davenport_f", "iman_davenport_p"]
        row += [f, fp]
    io.write_table(out / "friedman.csv", head, [row], comment)
    k = rt.k
    pairs = [
        (methods[i], methods[j], float(ph.p_values[i, j]))
        for i in range(k) for j in range(i + 1, k)
        if args.all_pairs or ph.p_values[i, j] < args.alpha
    ]
    io.write_table(out / "pairwise.csv", ["method_a", "method_b", "p_value"], pairs, comment)
    order = sorted(range(k), key=lambda i: (-rt.rank_sums[i], i))
    io.write_table(out / "groups.csv", ["group", "method", "rank_sum"],
                   [(letters[methods[i]], methods[i], float(rt.rank_sums[i])) for i in order], comment)
    print(f"friedman statistic={stat:.6f} p={p:.6g} cd={ph.cd:.6f}")
    return 0


def _coerce(v: str):
    v = v.strip()
    low = v.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def read_run_config(path) -> dict:
    """Parse a run config: ``[pipeline]`` plus optional per-method sections."""
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not cp.has_section("pipeline"):
        raise ConfigError("config needs a [pipeline] section")
    sec = cp["pipeline"]
    known = {"learners", "outer_k", "nested_k", "bags", "seed", "methods", "val_fraction", "dataset_name"}
    unknown = set(sec) - known
    if unknown:
        raise ConfigError(f"unknown [pipeline] keys: {sorted(unknown)}")
    try:
        cfg = {
            "learners": [s.strip() for s in sec.get("learners", "logistic, tree, knn, nb").split(",") if s.strip()],
            "outer_k": sec.getint("outer_k", 10),
            "nested_k": sec.getint("nested_k", 5),
            "bags": sec.getint("bags", 10),
            "seed": sec.getint("seed", 0),
            "methods": [s.strip() for s in sec.get("methods", ",".join(METHODS)).split(",") if s.strip()],
            "val_fraction": sec.getfloat("val_fraction", 1.0),
            "dataset_name": sec.get("dataset_name", ""),
        }
    except ValueError as exc:
        raise ConfigError(f"bad value in [pipeline]: {exc}") from exc
    bad = [m for m in cfg["methods"] if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods: {bad}")
    cfg["params"] = {
        name: {k: _coerce(v) for k, v in cp[name].items()}
        for name in cp.sections() if name != "pipeline"
    }
    bad = [s for s in cfg["params"] if s not in METHODS]
    if bad:
        raise ConfigError(f"config sections for unknown methods: {bad}")
    return cfg


def cmd_run(args) -> int:
    cfg = read_run_config(args.config)
    ids, X, y, _ = io.read_dataset(args.dataset)
    out = _out_dir(args)
    comment = config_comment(args, {"config": cfg}, seed=cfg["seed"])
    root = np.random.SeedSequence(cfg["seed"])
    plan_ss, method_ss = root.spawn(2)
    plan_seed = int(plan_ss.generate_state(1)[0])
    method_seed = int(method_ss.generate_state(1)[0])
    labelled = y >= 0
    plan = make_fold_plan(y[labelled], cfg["outer_k"], cfg["nested_k"], cfg["bags"], plan_seed)
    with method_stage("base learner pipeline"):
        output = run_pipeline(X, y, cfg["learners"], plan, ids, workers=args.workers)
    io.write_groups(out / "groups.tsv", output.groups, comment)
    for f, fold in enumerate(output.folds):
        io.write_predictions(out / f"fold{f:02d}_val_predictions.csv", fold.val, comment)
        io.write_labels(out / f"fold{f:02d}_val_labels.csv", fold.val.instance_ids, fold.val_labels, comment)
        io.write_predictions(out / f"fold{f:02d}_test_predictions.csv", fold.test, comment)
        io.write_labels(out / f"fold{f:02d}_test_labels.csv", fold.test.instance_ids, fold.test_labels, comment)
        if fold.unlabeled is not None:
            io.write_predictions(out / f"fold{f:02d}_unlabeled_predictions.csv", fold.unlabeled, comment)
    name = cfg["dataset_name"] or Path(args.dataset).stem
    reports = []
    for method in cfg["methods"]:
        with method_stage(f"method {method}"):
            rep = evaluate(method, output, cfg["params"].get(method, {}), dataset=name,
                           val_fraction=cfg["val_fraction"], seed=method_seed)
        log.info("%s: auc=%.4f brier=%.4f (%.2fs)", method, rep.test_auc, rep.brier, rep.wall_time)
        reports.append(rep)
    io.write_table(
        out / "methods.csv",
        ["method", "dataset", "test_auc", "brier", "ensemble_size", "weights"],
        [(r.method, r.dataset, r.test_auc, r.brier, "" if r.ensemble_size is None else r.ensemble_size,
          ";".join(f"{k}:{v!r}" for k, v in r.weights.items())) for r in reports],
        comment,
    )
    return 0


# ---------------------------------------------------------------- parser


def _add_io(p, test=True):
    p.add_argument("--predictions", required=True, help="prediction CSV (validation data)")
    p.add_argument("--labels", required=True, help="labels CSV aligned with --predictions")
    p.add_argument("--groups", help="classifier<TAB>group sidecar")
    p.add_argument("--clip", action="store_true", help="clamp values into [0, 1] on read")
    if test:
        p.add_argument("--test-predictions", help="held-out prediction CSV to score")
        p.add_argument("--test-labels", help="labels for --test-predictions")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ensemblekit",
        description="Build and evaluate classifier ensembles from prediction matrices.",
        epilog="exit codes: 0 ok, 2 bad arguments or config, 3 data error, 4 method error",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: $ENSEMBLEKIT_WORKERS or CPU count)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full CV pipeline from a dataset CSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("select", help="greedy or CES selection trajectory")
    _add_io(p)
    p.add_argument("--method", choices=["greedy", "ces"], default="ces")
    p.add_argument("--init-n", type=int, default=2)
    p.add_argument("--max-size", type=int, default=100)
    p.add_argument("--candidate-fraction", type=float, default=1.0)
    p.add_argument("--no-replacement", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("stack", help="logistic stacking")
    _add_io(p)
    p.add_argument("--mode", choices=["all", "aggregated"], default="aggregated")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p.add_argument("--val-fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stack)

    p = sub.add_parser("cluster-stack", help="intra-/inter-cluster stacking")
    _add_io(p)
    p.add_argument("--mode", choices=["intra", "inter"], default="intra")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--sweep", type=_k_range, help="k_min..k_max")
    p.add_argument("--distance", choices=["pearson", "qstat"], default="pearson")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cluster_stack)

    p = sub.add_parser("diversity", help="pairwise diversity vs performance (figure data)")
    _add_io(p, test=False)
    p.add_argument("--aggregate", action="store_true", help="average bag groups first")
    p.add_argument("--top-n", type=int, default=2, help="individually best classifiers to flag")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("calibration", help="Brier vs AUC for base classifiers and selection iterations")
    _add_io(p, test=False)
    p.add_argument("--aggregate", action="store_true", help="average bag groups for the base series")
    p.add_argument("--init-n", type=int, default=2)
    p.add_argument("--max-size", type=int, default=100)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_calibration)

    p = sub.add_parser("compare", help="Friedman/Nemenyi over a methods x datasets table")
    p.add_argument("--input", required=True, help="CSV: method,<dataset...>")
    p.add_argument("--alpha", type=float, choices=[0.05, 0.10], default=0.05)
    p.add_argument("--all-pairs", action="store_true", help="emit every pair, not only significant ones")
    p.add_argument("--iman-davenport", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="write a synthetic prediction pool")
    p.add_argument("--n-instances", type=int, default=1000)
    p.add_argument("--positive-rate", type=float, default=0.3)
    p.add_argument("--classifiers", type=int, default=10)
    p.add_argument("--signal", type=_floats, help="per-classifier signal (one value broadcasts)")
    p.add_argument("--shared-loading", type=_floats)
    p.add_argument("--alpha", type=_floats)
    p.add_argument("--beta", type=_floats)
    p.add_argument("--bags", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.workers is None:
        args.workers = default_workers()
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MethodError as exc:
        print(f"method error: {exc}", file=sys.stderr)
        return EXIT_METHOD
    except (ValidationError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
