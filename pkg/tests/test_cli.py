import csv
import subprocess
import sys

import numpy as np
import pytest

from ensemblekit import io
from ensemblekit.cli import EXIT_CONFIG, EXIT_DATA, EXIT_METHOD, main, read_run_config, ConfigError
from test_stats import TABLE_8x4


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(ln for ln in fh if not ln.startswith("#")))


@pytest.fixture
def synth_dir(tmp_path):
    d = tmp_path / "pool"
    assert main(["synth", "--n-instances", "300", "--classifiers", "4", "--bags", "2",
                 "--signal", "1.0,0.8,0.5,0.3", "--shared-loading", "0.5", "--seed", "3", "--out", str(d)]) == 0
    return d


def io_args(d):
    return ["--predictions", str(d / "predictions.csv"), "--labels", str(d / "labels.csv"),
            "--groups", str(d / "groups.tsv")]


def test_synth_outputs(synth_dir):
    m = io.read_predictions(synth_dir / "predictions.csv", synth_dir / "groups.tsv")
    assert m.shape == (300, 8)
    assert m.groups == ["clf00", "clf01", "clf02", "clf03"]
    assert len(rows(synth_dir / "oracle.csv")) == 301
    first = (synth_dir / "predictions.csv").read_text().splitlines()[0]
    assert first.startswith("# ensemblekit synth config_sha256=") and first.endswith("seed=3")


def test_select_trajectory_has_one_row_per_iteration(synth_dir, tmp_path):
    out = tmp_path / "sel"
    assert main(["select", *io_args(synth_dir), "--max-size", "12", "--out", str(out)]) == 0
    traj = rows(out / "trajectory.csv")
    assert traj[0] == ["iteration", "chosen", "val_auc", "mean_diversity", "brier"]
    assert [int(r[0]) for r in traj[1:]] == list(range(1, 13))
    w = rows(out / "weights.csv")
    assert sum(float(r[1]) for r in w[1:]) == pytest.approx(1.0)


def test_greedy_select(synth_dir, tmp_path):
    out = tmp_path / "g"
    assert main(["select", *io_args(synth_dir), "--method", "greedy", "--max-size", "8", "--out", str(out)]) == 0
    assert len(rows(out / "trajectory.csv")) == 9


def test_stack_and_cluster_stack(synth_dir, tmp_path):
    assert main(["stack", *io_args(synth_dir), "--mode", "aggregated",
                 "--test-predictions", str(synth_dir / "predictions.csv"),
                 "--test-labels", str(synth_dir / "labels.csv"), "--out", str(tmp_path / "s")]) == 0
    mw = rows(tmp_path / "s" / "meta_weights.csv")
    assert len(mw) == 5
    assert main(["cluster-stack", *io_args(synth_dir), "--sweep", "1..4", "--out", str(tmp_path / "c")]) == 0
    sweep = rows(tmp_path / "c" / "sweep.csv")
    assert [r[0] for r in sweep[1:]] == ["1", "2", "3", "4"]
    assert len(rows(tmp_path / "c" / "assignment.csv")) == 9


def test_diversity_and_calibration(synth_dir, tmp_path):
    assert main(["diversity", *io_args(synth_dir), "--aggregate", "--out", str(tmp_path / "d")]) == 0
    div = rows(tmp_path / "d" / "diversity.csv")
    assert div[0] == ["classifier_a", "classifier_b", "q_adjusted", "pair_mean_auc", "either_is_top_performer"]
    assert len(div) == 1 + 6
    assert main(["calibration", *io_args(synth_dir), "--max-size", "5", "--out", str(tmp_path / "b")]) == 0
    series = {r[0] for r in rows(tmp_path / "b" / "calibration.csv")[1:]}
    assert {"base"} <= series and len(series) >= 2


def test_compare_emits_overlapping_letters(tmp_path):
    inp = tmp_path / "perf.csv"
    with open(inp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "d1", "d2", "d3", "d4"])
        for i, r in enumerate(TABLE_8x4):
            w.writerow([f"method{i}", *r])
    assert main(["compare", "--input", str(inp), "--out", str(tmp_path / "cmp")]) == 0
    groups = rows(tmp_path / "cmp" / "groups.csv")
    assert groups[0] == ["group", "method", "rank_sum"]
    letters = [g[0] for g in groups[1:]]
    assert letters == ["a", "ab", "abc", "abc", "abc", "abc", "bc", "c"]
    fr = rows(tmp_path / "cmp" / "friedman.csv")
    assert float(fr[1][1]) < 0.05


def test_reruns_are_byte_identical(synth_dir, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["select", *io_args(synth_dir), "--max-size", "10", "--out", str(out)]) == 0
        assert main(["cluster-stack", *io_args(synth_dir), "--mode", "inter", "--k", "2", "--out", str(out)]) == 0
        outs.append(out)
    for f in sorted(p.name for p in outs[0].iterdir()):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def test_data_error_exit_code(synth_dir, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("instance_id,a\nx,1.3\n")
    assert main(["select", "--predictions", str(bad), "--labels", str(synth_dir / "labels.csv"),
                 "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert main(["select", "--predictions", str(tmp_path / "missing.csv"), "--labels", str(bad),
                 "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_method_error_exit_code(synth_dir, tmp_path):
    code = main(["select", *io_args(synth_dir), "--init-n", "50", "--out", str(tmp_path / "o")])
    assert code in (EXIT_METHOD, EXIT_DATA)
    # a single-class label file is a data problem the methods cannot fit
    lab = tmp_path / "one.csv"
    ids = [r[0] for r in rows(synth_dir / "labels.csv")[1:]]
    io.write_labels(lab, ids, [1] * len(ids))
    code = main(["stack", "--predictions", str(synth_dir / "predictions.csv"), "--labels", str(lab),
                 "--out", str(tmp_path / "o2")])
    assert code == EXIT_METHOD


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[pipeline]\nlearners = logistic\nbogus = 1\n")
    ds = tmp_path / "d.csv"
    ds.write_text("instance_id,f,label\na,1,1\n")
    assert main(["run", "--dataset", str(ds), "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["select"])
    assert exc.value.code == 2


def test_run_config_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[pipeline]\nlearners = nb, tree\nouter_k = 3\nmethods = mean, ces\n\n[ces]\nmax_size = 7\n")
    parsed = read_run_config(cfg)
    assert parsed["learners"] == ["nb", "tree"] and parsed["outer_k"] == 3
    assert parsed["params"] == {"ces": {"max_size": 7}}
    cfg.write_text("[pipeline]\nmethods = median\n")
    with pytest.raises(ConfigError):
        read_run_config(cfg)


def test_run_small_pipeline(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(90, 3))
    y = (X[:, 0] + rng.normal(size=90) > 0).astype(int)
    ds = tmp_path / "data.csv"
    io.write_dataset(ds, [f"r{i}" for i in range(90)], X, y, ["a", "b", "c"])
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[pipeline]\nlearners = logistic, nb\nouter_k = 3\nnested_k = 2\nbags = 2\nseed = 4\n"
                   "methods = best_base, mean, ces, stack_aggregated, intra\n\n[intra]\nk = 1..2\n")
    assert main(["--workers", "2", "run", "--dataset", str(ds), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    methods = rows(tmp_path / "o" / "methods.csv")
    assert [r[0] for r in methods[1:]] == ["best_base", "mean", "ces", "stack_aggregated", "intra"]
    assert (tmp_path / "o" / "fold02_test_predictions.csv").exists()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ensemblekit", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "synth" in r.stdout
