import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fundcat import cli


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["-q", "generate", "--preset", "small", "--out", str(d / "u.csv"), "--seed", "3"]) == 0
    return d


def run(*args):
    return cli.main(["-q", *map(str, args)])


def test_generate_writes_manifest(workdir):
    man = json.loads((workdir / "u.csv.manifest.json").read_text())
    assert man["subcommand"] == "generate"
    assert man["seeds"] == {"generator": 3}
    assert man["outputs"] == [str(workdir / "u.csv")]


def test_generate_is_deterministic(workdir):
    assert run("generate", "--preset", "small", "--out", workdir / "u2.csv", "--seed", "3") == 0
    assert (workdir / "u2.csv").read_bytes() == (workdir / "u.csv").read_bytes()


def test_train_evaluate_report_predict(workdir):
    u = workdir / "u.csv"
    out = workdir / "rf"
    assert run("train", "--model", "rf", "--n-estimators", "10", "--data", u, "--out-dir", out) == 0
    assert (out / "model.json").exists() and (out / "importance.csv").exists()
    train_man = json.loads((out / "manifest_train.json").read_text())
    assert train_man["inputs"][str(u)]
    assert train_man["config"]["n_estimators"] == 10

    assert run("evaluate", "--model", out / "model.json", "--data", u) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    for key in ("accuracy", "balanced_accuracy", "f1_micro", "f1_macro", "f1_weighted", "auc_micro",
                "auc_macro", "top_k_accuracy", "per_class", "categories"):
        assert metrics[key] is not None
    assert metrics["n"] == len(json.loads((out / "model.json").read_text())["body"]["metadata"]["test_fund_ids"])

    rep = workdir / "report"
    assert run("report", "--model", out / "model.json", "--data", u, "--out-dir", rep) == 0
    for name in ("metrics.json", "confusion.csv", "per_class.csv", "roc_micro.csv", "roc_macro.csv",
                 "roc_class_0.csv", "importance.csv", "manifest_report.json"):
        assert (rep / name).exists(), name
    # evaluate and report agree on metrics.json
    assert (rep / "metrics.json").read_text() == (out / "metrics.json").read_text()
    with open(rep / "roc_micro.csv") as fh:
        assert next(csv.reader(fh)) == ["fpr", "tpr", "threshold"]

    pred = workdir / "pred.csv"
    assert run("predict", "--model", out / "model.json", "--data", u, "--k", "3", "--out", pred) == 0
    with open(pred) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["fund_id", "category_1", "probability_1", "category_2", "probability_2",
                       "category_3", "probability_3"]
    for row in rows[1:]:
        probs = [float(p) for p in row[2::2]]
        assert probs == sorted(probs, reverse=True) and sum(probs) <= 1 + 1e-12

    assert run("predict", "--model", out / "model.json", "--data", u, "--k", "1", "--out", pred) == 0
    with open(pred) as fh:
        assert len(next(csv.reader(fh))) == 3


def test_train_twice_same_checksum(workdir):
    u = workdir / "u.csv"
    sums = []
    for name in ("a", "b"):
        assert run("train", "--model", "rf", "--seed", "7", "--n-estimators", "5", "--data", u,
                   "--out-dir", workdir / name) == 0
        sums.append(json.loads((workdir / name / "model.json").read_text())["checksum"])
    assert sums[0] == sums[1]


def test_train_mlp_and_dt(workdir):
    u = workdir / "u.csv"
    assert run("train", "--model", "mlp", "--epochs", "3", "--data", u, "--out-dir", workdir / "mlp") == 0
    with open(workdir / "mlp" / "history.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "train_loss", "val_loss", "val_accuracy"] and len(rows) == 4
    assert run("train", "--model", "dt", "--criterion", "entropy", "--max-depth", "4", "--dump-matrix",
               "--data", u, "--out-dir", workdir / "dt") == 0
    assert (workdir / "dt" / "train_matrix.csv").exists()


def test_gridsearch_reports_every_configuration(workdir):
    out = workdir / "gs"
    assert run("gridsearch", "--data", workdir / "u.csv", "--estimators", "2,3", "--criteria", "gini,entropy",
               "--folds", "3", "--out-dir", out) == 0
    report = json.loads((out / "gridsearch.json").read_text())
    assert len(report["configurations"]) == 4
    assert all(len(c["fold_scores"]) == 3 for c in report["configurations"])


def test_svg_report(workdir):
    pytest.importorskip("matplotlib")
    u = workdir / "u.csv"
    assert run("train", "--model", "dt", "--data", u, "--out-dir", workdir / "svg") == 0
    assert run("report", "--model", workdir / "svg" / "model.json", "--data", u, "--svg") == 0
    assert (workdir / "svg" / "roc.svg").read_text().lstrip().startswith("<?xml")
    assert (workdir / "svg" / "confusion.svg").exists()


def test_exit_codes(workdir, tmp_path, capsys):
    u = workdir / "u.csv"
    assert run("train", "--bogus") == cli.EXIT_USAGE
    assert run("frobnicate") == cli.EXIT_USAGE
    assert run("train", "--data", tmp_path / "nope.csv", "--out-dir", tmp_path) == cli.EXIT_IO
    bad = tmp_path / "bad.csv"
    bad.write_text("fund_id,fund_type,global_category,Nope::x\n")
    assert run("train", "--data", bad, "--out-dir", tmp_path) == cli.EXIT_DATA
    assert run("generate", "--out", tmp_path / "x.csv", "--n-funds", "10", "--n-categories", "5") == cli.EXIT_USAGE

    assert run("train", "--model", "dt", "--data", u, "--out-dir", tmp_path / "m") == 0
    model = tmp_path / "m" / "model.json"
    text = model.read_text()
    model.write_text(text[: len(text) - 40])
    assert run("evaluate", "--model", model, "--data", u) == cli.EXIT_ARTIFACT
    assert "checksum" in capsys.readouterr().err

    assert run("train", "--model", "mlp", "--lr", "1e200", "--epochs", "2", "--data", u,
               "--out-dir", tmp_path / "div") == cli.EXIT_NUMERIC
    assert "epoch 1" in capsys.readouterr().err


def test_predict_names_unknown_columns(workdir, tmp_path, capsys):
    u = workdir / "u.csv"
    assert run("train", "--model", "dt", "--data", u, "--out-dir", tmp_path / "m") == 0
    lines = u.read_text().splitlines()
    header = lines[0].split(",")
    header[3] = "Coupons::Mystery"
    extra = tmp_path / "extra.csv"
    extra.write_text("\n".join([",".join(header), *lines[1:5]]) + "\n")
    code = run("predict", "--model", tmp_path / "m" / "model.json", "--data", extra, "--out", tmp_path / "p.csv")
    assert code == cli.EXIT_DATA
    assert "Coupons::Mystery" in capsys.readouterr().err


def test_predict_accepts_unlabeled_input(workdir, tmp_path):
    u = workdir / "u.csv"
    assert run("train", "--model", "dt", "--data", u, "--out-dir", tmp_path / "m") == 0
    rows = [line.split(",") for line in u.read_text().splitlines()[:6]]
    unl = tmp_path / "unl.csv"
    unl.write_text("\n".join(",".join(r[:2] + r[3:]) for r in rows) + "\n")
    assert run("predict", "--model", tmp_path / "m" / "model.json", "--data", unl, "--k", "2",
               "--out", tmp_path / "p.csv") == 0
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 6


def test_console_script_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "fundcat.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("fundcat ")
