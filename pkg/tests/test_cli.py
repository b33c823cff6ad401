import csv
import math
import time

import numpy as np
import pytest

from timediscount import checkpoint, cli, datasets, synth
from timediscount.metrics import auc


def write_series(path, series):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"a{i}" for i in range(series.shape[0])])
        for row in series.T:
            w.writerow([repr(float(v)) for v in row])


@pytest.fixture
def series_csv(tmp_path):
    series, _ = synth.var_series(300, 2, seed=11)
    path = tmp_path / "series.csv"
    write_series(path, series)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_file_and_overrides(tmp_path):
    (tmp_path / "run.cfg").write_text("# comment\nK = 8\nlam = 0.9\niterations = 5\nseeds = 1,2\n"
                                      "patch_lengths = 1,full\nshuffle = yes\n")
    parser = cli.build_parser()
    args, extra = parser.parse_known_args(["train", "--config", str(tmp_path / "run.cfg"), "--out", "o",
                                           "--K", "16", "--batch-size=4"])
    cfg = cli.load_run_config(args, extra)
    assert cfg.model == {"K": 16, "lam": 0.9, "patch_lengths": (1, -1)}
    assert (cfg.iterations, cfg.seeds, cfg.batch_size, cfg.shuffle) == (5, (1, 2), 4, True)


def test_unknown_keys_are_usage_errors(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("K = 4\nwidth = 3\n")
    assert cli.main(["train", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path), "--depth", "2"]) == 1
    assert "depth, width" in capsys.readouterr().err
    assert cli.main(["train", "--out", str(tmp_path), "--K", "many"]) == 1
    assert cli.main(["train", "--out", str(tmp_path), "--K", "1"]) == 1
    assert cli.main(["frobnicate"]) == 1


def test_exit_codes_for_data_and_numeric_failures(tmp_path, series_csv):
    assert cli.main(["train", "--out", str(tmp_path / "x"), "--data", str(tmp_path / "missing.csv")]) == 2
    (tmp_path / "bad.csv").write_text("a\n1\nzz\n")
    assert cli.main(["train", "--out", str(tmp_path / "x"), "--data", str(tmp_path / "bad.csv")]) == 2
    assert cli.main(["train", "--out", str(tmp_path / "x"), "--data", str(series_csv), "--history", "500"]) == 2
    code = cli.main(["train", "--out", str(tmp_path / "x"), "--data", str(series_csv), "--history", "10",
                     "--iterations", "30", "--alpha", "1e300"])
    assert code == 3


def test_train_writes_artifacts_and_consistent_report(tmp_path, series_csv):
    out = tmp_path / "run"
    assert cli.main(["train", "--out", str(out), "--data", str(series_csv), "--history", "10",
                     "--iterations", "40", "--seeds", "0,1", "--K", "4"]) == 0
    for name in ("trainlog.csv", "metrics.csv", "predictions.csv", "checkpoint-seed0.bin", "checkpoint-seed1.bin"):
        assert (out / name).is_file()
    log = read_rows(out / "trainlog.csv")
    assert len(log) == 80 and list(log[0]) == ["seed", "iteration", "objective", "test_metric"]
    metrics = {r["seed"]: r for r in read_rows(out / "metrics.csv")}
    preds = read_rows(out / "predictions.csv")
    for seed in ("0", "1"):
        rows = [r for r in preds if r["seed"] == seed]
        err = [(float(r[f"pred{j}"]) - float(r[f"target{j}"])) ** 2 for r in rows for j in range(2)]
        assert math.sqrt(np.mean(err)) == pytest.approx(float(metrics[seed]["final"]), abs=1e-12)
        assert float(metrics[seed]["best"]) <= float(metrics[seed]["average"])
        per = [float(r["test_metric"]) for r in log if r["seed"] == seed]
        assert float(metrics[seed]["average"]) == pytest.approx(np.mean(per), rel=1e-12)
    assert float(metrics["all"]["best"]) == min(float(metrics[s]["best"]) for s in ("0", "1"))


def test_sunspot_selected_config_report_fields(tmp_path):
    out = tmp_path / "sun"
    (tmp_path / "sun.cfg").write_text("l1 = 0.01\nK = 4\nlam = 0.85\nmu = 0.85\npool1_l0 = 1\npool1_l = 1.0\n"
                                      "pool2_l0 = 1\npool2_l = 1.0\niterations = 20\n")
    assert cli.main(["train", "--config", str(tmp_path / "sun.cfg"), "--out", str(out)]) == 0
    row = read_rows(out / "metrics.csv")[0]
    assert row["metric"] == "rmse"
    assert all(math.isfinite(float(row[k])) for k in ("average", "best", "final"))


def test_zero_iterations_gives_empty_report(tmp_path, series_csv):
    out = tmp_path / "z"
    assert cli.main(["train", "--out", str(out), "--data", str(series_csv), "--history", "10",
                     "--iterations", "0"]) == 0
    assert len(read_rows(out / "trainlog.csv")) == 0
    assert math.isnan(float(read_rows(out / "metrics.csv")[0]["average"]))


def test_metric_report_invariants():
    rep = cli.MetricReport("auc", [cli.SeedResult(0, 0.7, 0.8, 5, 0.75), cli.SeedResult(1, 0.6, 0.9, 2, 0.8)])
    assert rep.best == 0.9 and rep.best_iter == 2 and rep.best_seed == 1
    assert rep.best >= rep.average == pytest.approx(0.65)
    assert math.isnan(cli.MetricReport("rmse", []).average)


def test_standard_grid_size():
    assert len(cli.expand_grid(cli.standard_grid())) == 4 * 4 * 6 * 4 * 3 == 1152
    assert len(cli.expand_grid(cli.standard_grid(coupled=False))) == 4608
    pt = cli.expand_grid(cli.standard_grid())[0]
    assert pt["lam"] == pt["mu"] and pt["pool1_l0"] == pt["pool2_l0"]


def test_grid_parsing():
    grid = cli.parse_grid(["K=2,4", "lam_mu=0.8,0.9"])
    assert grid == {"K": [2, 4], "lam_mu": [0.8, 0.9]}
    with pytest.raises(cli.UsageError):
        cli.parse_grid(["depth=1,2"])


def test_singleton_grid_equals_train(tmp_path, series_csv):
    common = ["--data", str(series_csv), "--history", "10", "--iterations", "30", "--K", "4"]
    assert cli.main(["gridsearch", "--out", str(tmp_path / "g"), "--grid", "lam_mu=0.9"] + common) == 0
    assert cli.main(["train", "--out", str(tmp_path / "t"), "--lam", "0.9", "--mu", "0.9"] + common) == 0
    assert (tmp_path / "g" / "metrics.csv").read_bytes() == (tmp_path / "t" / "metrics.csv").read_bytes()
    ranking = read_rows(tmp_path / "g" / "ranking.csv")
    assert len(ranking) == 1 and ranking[0]["status"] == "ok"


def test_grid_selects_the_better_point_and_records_failures(tmp_path):
    # the target depends on lag 5 only; a lag-1 VAR cannot see it
    rng = np.random.default_rng(0)
    x = rng.normal(size=400)
    y = np.zeros(400)
    y[5:] = x[:-5]
    path = tmp_path / "s.csv"
    write_series(path, np.vstack([x, y]))
    args = ["--data", str(path), "--kind", "var", "--history", "6", "--var_solver", "ols",
            "--grid", "var_lag=1,5,9"]
    assert cli.main(["gridsearch", "--out", str(tmp_path / "g")] + args) == 0
    rows = read_rows(tmp_path / "g" / "ranking.csv")
    assert rows[0]["var_lag"] == "5" and rows[0]["rank"] == "1"
    assert rows[-1]["var_lag"] == "9" and rows[-1]["status"] == "failed" and "lag 9" in rows[-1]["error"]
    assert cli.main(["gridsearch", "--out", str(tmp_path / "g2"), "--jobs", "2"] + args) == 0
    assert (tmp_path / "g" / "ranking.csv").read_bytes() == (tmp_path / "g2" / "ranking.csv").read_bytes()


def test_gridsearch_list(capsys, tmp_path):
    assert cli.main(["gridsearch", "--out", str(tmp_path), "--standard-grid", "--list"]) == 0
    assert "1152" in capsys.readouterr().out


def test_evaluate_checkpoint(tmp_path, series_csv):
    out = tmp_path / "run"
    common = ["--data", str(series_csv), "--history", "10"]
    assert cli.main(["train", "--out", str(out), "--iterations", "20"] + common) == 0
    assert cli.main(["evaluate", "--checkpoint", str(out / "checkpoint-seed0.bin"), "--out", str(tmp_path / "e")]) == 0
    ev = read_rows(tmp_path / "e" / "metrics.csv")[0]
    tr = read_rows(out / "metrics.csv")[0]
    assert float(ev["average"]) == float(tr["final"])
    # a three-attribute series does not fit the two-attribute model
    write_series(tmp_path / "wide.csv", np.random.default_rng(0).normal(size=(3, 100)))
    code = cli.main(["evaluate", "--checkpoint", str(out / "checkpoint-seed0.bin"), "--out", str(tmp_path / "e2"),
                     "--data", str(tmp_path / "wide.csv")])
    assert code == 2


def test_synth_and_classification_round_trip(tmp_path):
    assert cli.main(["synth", "planted", "--out", str(tmp_path / "a"), "--n", "120", "--seed", "4"]) == 0
    assert cli.main(["synth", "planted", "--out", str(tmp_path / "b"), "--n", "120", "--seed", "4"]) == 0
    for f in ("events.csv", "labels.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert cli.main(["synth", "planted", "--out", str(tmp_path / "c"), "--missing", "1"]) == 2
    out = tmp_path / "run"
    assert cli.main(["train", "--out", str(out), "--data", str(tmp_path / "a" / "events.csv"),
                     "--labels", str(tmp_path / "a" / "labels.csv"), "--history", "64",
                     "--iterations", "10", "--split", "0.75"]) == 0
    preds = read_rows(out / "predictions.csv")
    assert len(preds) == 30
    score = auc([int(r["label"]) for r in preds], [float(r["score"]) for r in preds])
    assert float(read_rows(out / "metrics.csv")[0]["final"]) == pytest.approx(score, abs=1e-12)
    assert cli.main(["evaluate", "--checkpoint", str(out / "checkpoint-seed0.bin"), "--out", str(tmp_path / "e")]) == 0
    assert cli.main(["train", "--out", str(out), "--data", str(tmp_path / "a" / "events.csv")]) == 2


def test_gradcheck_command(capsys):
    t0 = time.time()
    assert cli.main(["gradcheck", "--cases", "2"]) == 0
    assert capsys.readouterr().out.count(": ok") == 5
    assert cli.main(["gradcheck", "--kinds", "tdconv", "--cases", "1", "--inject-sign-error"]) == 3
    out = capsys.readouterr().out
    assert "FAIL" in out and "case 0:" in out
    assert time.time() - t0 < 10


def test_tiny_gradcheck_is_fast():
    from timediscount.checks import random_case
    from timediscount.model import KINDS
    from timediscount.optim import grad_check

    rng = np.random.default_rng(0)
    for kind in KINDS:
        m, X, Y = random_case(kind, rng)
        while m.config.history != 4:
            m, X, Y = random_case(kind, rng)
        t0 = time.time()
        assert grad_check(m, X, Y).passed
        assert time.time() - t0 < 1.0


def test_flip_largest_targets_biggest_coordinate():
    g = {"a": np.array([0.1, -3.0]), "b": np.array([[2.0]])}
    cli.flip_largest(g)
    assert g["a"].tolist() == [0.1, 3.0] and g["b"].tolist() == [[2.0]]


def test_checkpoint_meta_holds_training_stats(tmp_path, series_csv):
    out = tmp_path / "run"
    assert cli.main(["train", "--out", str(out), "--data", str(series_csv), "--history", "10",
                     "--iterations", "3"]) == 0
    meta = checkpoint.read_meta((out / "checkpoint-seed0.bin").read_bytes())
    series, _ = synth.var_series(300, 2, seed=11)
    cut = 201  # floor(0.67 * 300)
    np.testing.assert_allclose(meta["stats"]["center"], series[:, :cut].min(axis=1), rtol=1e-15)
    assert datasets.stats_from_dict(meta["stats"]).mode == "minmax"
