import csv
import json
import math
import shutil
import subprocess

import numpy as np
import pytest

from qens import harness
from qens.cli import EXIT_CAP, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from qens.config import parse_config
from qens.data import load_csv

SMALL = """\
name: small
seed: 7
splits: 3
output: run
dataset:
  blobs:
    cluster_std: [0.3]
    centers: [[0.3, 1.0]]
models:
  - kind: qcc
    engine: closed_form
  - kind: bagging
    learning_rate: [0.1]
    batch_size: [8]
    num_learners: [2]
    epochs: 3
  - kind: forest
    configs:
      - {n_estimators: 5, max_depth: 3}
"""


def write_config(tmp_path, text=SMALL, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def results_row(model, split, acc, brier, dataset="d", cid="c"):
    return {"dataset": dataset, "model": model, "config_id": cid, "params": "", "config_hash": "h", "seed": 0,
            "split_id": split, "accuracy": acc, "f1_weighted": acc, "brier": brier, "single_class": False}


class TestGenBlobs:
    def test_eighteen_files_of_hundred_rows(self, tmp_path):
        cfg = write_config(tmp_path, "models:\n  - kind: forest\n")
        assert main(["gen-blobs", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
        csvs = sorted((tmp_path / "a" / "datasets").glob("*.csv"))
        assert len(csvs) == 18
        for p in csvs:
            assert len(load_csv(p)) == 100
            splits = json.loads(p.with_suffix(".splits.json").read_text())["splits"]
            assert len(splits) == 10

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, "seed: 5\nmodels:\n  - kind: forest\n")
        main(["gen-blobs", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["gen-blobs", "--config", str(cfg), "--out", str(tmp_path / "b")])
        names = sorted(p.name for p in (tmp_path / "a" / "datasets").iterdir())
        for n in names:
            assert (tmp_path / "a" / "datasets" / n).read_bytes() == (tmp_path / "b" / "datasets" / n).read_bytes()

    def test_seed_flag_changes_data(self, tmp_path):
        cfg = write_config(tmp_path, "models:\n  - kind: forest\n")
        main(["gen-blobs", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["gen-blobs", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "1"])
        name = "blobs_std0.3_c0.3-1.csv"
        assert (tmp_path / "a" / "datasets" / name).read_bytes() != (tmp_path / "b" / "datasets" / name).read_bytes()


class TestSearch:
    def test_tables_and_manifest(self, tmp_path):
        text = SMALL.replace("splits: 3", "splits: 2").replace(
            "    learning_rate: [0.1]\n    batch_size: [8]\n    num_learners: [2]\n    epochs: 3\n",
            "    epochs: 1\n").replace("    configs:\n      - {n_estimators: 5, max_depth: 3}\n", "    n_iter: 2\n")
        text = text.replace("  - kind: qcc\n    engine: closed_form\n", "")
        cfg = write_config(tmp_path, text)
        out = tmp_path / "s"
        assert main(["search", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        ds = "blobs_std0.3_c0.3-1"
        for k in range(2):
            assert len(read_csv(out / "search" / ds / f"bagging-split{k}.csv")) == 105
            assert len(read_csv(out / "search" / ds / f"forest-split{k}.csv")) == 2
        manifest = json.loads((out / "search" / "manifest.json").read_text())
        entry = harness.load_datasets(parse_config(text), tmp_path)[0]
        for e in manifest["entries"]:
            split = entry.splits[e["split_id"]]
            assert e["train_indices"] == split.train.tolist()
            assert not set(e["train_indices"]) & set(split.test.tolist())

        # train-eval picks up the searched configs
        assert main(["train-eval", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out / "results.csv")
        assert {r["config_id"] for r in rows} == {"searched"}
        assert len(rows) == 4


class TestTrainEval:
    def test_outputs_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["train-eval", "--config", str(cfg)]) == EXIT_OK
        run = tmp_path / "run"
        first = (run / "results.csv").read_text().splitlines()
        assert first[0].startswith("# generated ")
        shutil.move(str(run), str(tmp_path / "run1"))
        assert main(["train-eval", "--config", str(cfg)]) == EXIT_OK
        second = (run / "results.csv").read_text().splitlines()
        assert first[1:] == second[1:]

        rows = read_csv(run / "results.csv")
        assert len(rows) == 9  # 3 models, one config each, 3 splits
        assert list(rows[0]) == list(harness.RESULT_COLUMNS)
        for r in rows:
            assert r["single_class"] in ("0", "1")
            assert r["config_hash"] and r["seed"].isdigit()
        for name in ("summary.csv", "best.csv", "ttests.csv", "manifest.json"):
            assert (run / name).exists()
        assert len(list((run / "models").rglob("*.txt"))) == 6  # forest models are not written

    def test_workers_match_serial(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["train-eval", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["train-eval", "--config", str(cfg), "--out", str(tmp_path / "b"), "--workers", "2"])
        a = (tmp_path / "a" / "results.csv").read_text().splitlines()[1:]
        b = (tmp_path / "b" / "results.csv").read_text().splitlines()[1:]
        assert a == b

    def test_single_class_column(self, tmp_path):
        # an untrained-looking forest of depth 0 predicts one class everywhere
        text = SMALL.replace("{n_estimators: 5, max_depth: 3}", "{n_estimators: 1, max_depth: 0}")
        cfg = write_config(tmp_path, text)
        main(["train-eval", "--config", str(cfg)])
        forest = [r for r in read_csv(tmp_path / "run" / "results.csv") if r["model"] == "forest"]
        assert all(r["single_class"] == "1" for r in forest)

    def test_shots_mode(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["train-eval", "--config", str(cfg), "--mode", "shots", "--shots", "64"]) == EXIT_OK
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["mode"] == "shots" and manifest["shots"] == 64


class TestReport:
    def make_run(self, tmp_path, rows):
        run = tmp_path / "r"
        run.mkdir()
        harness.write_results(rows, run / "results.csv", timestamp="t")
        return run

    def test_hand_computed_aggregates_and_stars(self, tmp_path):
        rows = []
        for k, (f, b, s) in enumerate(zip((0.5, 0.6, 0.7), (0.9, 0.95, 1.0), (0.55, 0.65, 0.6))):
            rows.append(results_row("forest", k, f, 1 - f))
            rows.append(results_row("bagging", k, b, 1 - b))
            rows.append(results_row("soft_vote", k, s, 1 - s))
        run = self.make_run(tmp_path, rows)
        assert main(["report", str(run)]) == EXIT_OK
        plot = read_csv(run / "plot_data.csv")
        assert list(plot[0])[:4] == ["model", "metric", "mean", "stderr"]
        got = {(r["model"], r["metric"]): (float(r["mean"]), float(r["stderr"]))
               for r in plot if r["criterion"] == "accuracy"}
        assert got[("forest", "accuracy")] == pytest.approx((0.6, 0.1 / math.sqrt(3)), abs=1e-12)
        assert got[("bagging", "accuracy")] == pytest.approx((0.95, 0.05 / math.sqrt(3)), abs=1e-12)
        assert got[("soft_vote", "brier")] == pytest.approx((0.4, 0.05 / math.sqrt(3)), abs=1e-12)

        tests = {(t["model"], t["metric"]): t for t in harness.compare_to_baseline(harness.read_results(
            run / "results.csv"))}
        summary = (run / "summary.txt").read_text().splitlines()
        for line in summary:
            parts = line.split()
            if parts and parts[0] in ("bagging", "soft_vote"):
                cells = line.split("±")[1:]
                for metric, cell in zip(harness.METRICS, cells):
                    p = tests[(parts[0], metric)]["p"]
                    assert ("*" in cell) == (p < 0.05)
        assert tests[("bagging", "accuracy")]["p"] < 0.05
        assert tests[("soft_vote", "accuracy")]["p"] > 0.05

    def test_single_record_has_empty_stderr(self, tmp_path):
        run = self.make_run(tmp_path, [results_row("forest", 0, 0.8, 0.2)])
        assert main(["report", str(run)]) == EXIT_OK
        plot = read_csv(run / "plot_data.csv")
        assert plot and all(r["stderr"] == "" for r in plot)
        assert "n/a" in (run / "summary.txt").read_text()

    def test_missing_directory(self, tmp_path, capsys):
        assert main(["report", str(tmp_path / "nope")]) == EXIT_DATA
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", str(empty)]) == EXIT_DATA
        assert "data error" in capsys.readouterr().err


class TestPredict:
    def test_model_files_predict(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["train-eval", "--config", str(cfg)])
        run = tmp_path / "run"
        data = load_csv(_features(tmp_path), require_label=False)
        for model in sorted((run / "models").rglob("*-split0.txt")):
            out = tmp_path / f"{model.parent.name}.csv"
            assert main(["predict", "--model", str(model), "--input", str(tmp_path / "x.csv"),
                         "--out", str(out)]) == EXIT_OK
            rows = read_csv(out)
            assert len(rows) == len(data)
            for r in rows:
                p = float(r["probability"])
                assert 0.0 <= p <= 1.0 and int(r["label"]) == int(p >= 0.5)
            assert main(["predict", "--model", str(model), "--input", str(tmp_path / "x.csv"),
                         "--out", str(out), "--mode", "shots", "--shots", "100"]) == EXIT_OK
            shots = np.array([float(r["probability"]) for r in read_csv(out)])
            if model.parent.name == "qcc":
                # a single-learner estimate is a count over 100 shots
                assert np.allclose(shots * 100, np.round(shots * 100))

    def test_loaded_ensemble_matches_direct(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["train-eval", "--config", str(cfg)])
        path = next((tmp_path / "run" / "models").rglob("bagging/*-split1.txt"))
        loaded = harness.load_model(path)
        X = np.random.default_rng(0).uniform(0, 1.5, (5, 2))
        direct = loaded.ensemble.predict_proba(loaded.scaler.apply(X))
        assert np.array_equal(loaded.predict_proba(X), direct)

    def test_bad_inputs(self, tmp_path):
        bogus = tmp_path / "m.txt"
        bogus.write_text("hello\n")
        _features(tmp_path)
        assert main(["predict", "--model", str(bogus), "--input", str(tmp_path / "x.csv")]) == EXIT_DATA
        assert main(["predict", "--model", str(tmp_path / "none.txt"), "--input", "x"]) == EXIT_DATA


def _features(tmp_path):
    p = tmp_path / "x.csv"
    rows = np.random.default_rng(1).uniform(-0.5, 2.0, (6, 2))
    p.write_text("x0,x1\n" + "".join(f"{a},{b}\n" for a, b in rows))
    return p


class TestExitCodes:
    def test_config_error_with_line(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "models:\n  - kind: forest\n    n_iter: 0\n")
        assert main(["train-eval", "--config", str(cfg)]) == EXIT_CONFIG
        assert "line 3" in capsys.readouterr().err

    def test_missing_csv(self, tmp_path):
        text = "dataset:\n  kind: csv\n  csv: {path: missing.csv}\nmodels:\n  - kind: forest\n"
        assert main(["train-eval", "--config", str(write_config(tmp_path, text))]) == EXIT_DATA

    def test_hardware_sized_config_rejected(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("QENS_MAX_QUBITS", raising=False)
        text = SMALL.replace("  - kind: qcc\n    engine: closed_form\n",
                             "  - kind: qec\n    d: [2]\n    n_train: [8]\n    n_feature: [32]\n")
        assert main(["train-eval", "--config", str(write_config(tmp_path, text))]) == EXIT_CAP
        err = capsys.readouterr().err
        assert "56 qubits" in err and "26" in err
        assert not (tmp_path / "run" / "results.csv").exists()

    def test_cap_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QENS_MAX_QUBITS", "6")
        text = SMALL.replace("  - kind: qcc\n    engine: closed_form\n", "  - kind: qec\n")
        assert main(["train-eval", "--config", str(write_config(tmp_path, text))]) == EXIT_CAP

    def test_console_script(self, tmp_path):
        exe = shutil.which("qens")
        if exe is None:
            pytest.skip("console script not installed")
        cfg = write_config(tmp_path, "models: oops\n")
        proc = subprocess.run([exe, "gen-blobs", "--config", str(cfg)], capture_output=True, text=True)
        assert proc.returncode == EXIT_CONFIG
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "train-eval" in proc.stdout
