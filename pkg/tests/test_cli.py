import json
import os

import numpy as np
import pytest

from skycast.cli import cli_main, evaluate_manifest
from skycast.dataset import load_manifest


def run_cli(capsys, *argv):
    code = cli_main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_unknown_subcommand_usage_error(capsys):
    code, _, err = run_cli(capsys, "frobnicate")
    assert code == 1
    assert "usage" in err.lower()


def test_missing_required_flag_usage_error(capsys):
    code, _, err = run_cli(capsys, "train", "--model", "rf")
    assert code == 1
    assert "usage" in err.lower()


def test_runtime_error_exit_code(capsys, tmp_path):
    code, _, err = run_cli(
        capsys, "eval", "--manifest", str(tmp_path / "missing.jsonl"), "--model", "x"
    )
    assert code == 2
    assert "error" in err.lower()


def test_dataset_gen_split_and_figures(capsys, tmp_path):
    out = tmp_path / "corpus"
    report_dir = tmp_path / "report"
    code, stdout, _ = run_cli(
        capsys,
        "dataset", "gen",
        "--out", str(out),
        "--per-grade", "3",
        "--size", "48",
        "--seed", "5",
        "--report-dir", str(report_dir),
    )
    assert code == 0
    assert (out / "manifest.jsonl").exists()
    assert (report_dir / "sample_grid.png").exists()
    assert len(load_manifest(out / "manifest.jsonl")) == 15

    code, stdout, _ = run_cli(
        capsys,
        "dataset", "split",
        "--manifest", str(out / "manifest.jsonl"),
        "--seed", "1",
    )
    assert code == 0
    entries = load_manifest(out / "manifest.jsonl")
    assert all(e.split in ("train", "val", "test") for e in entries)


def test_dataset_balance(capsys, tmp_path):
    out = tmp_path / "corpus"
    run_cli(capsys, "dataset", "gen", "--out", str(out), "--per-grade", "3", "--size", "48")
    manifest = out / "manifest.jsonl"
    balanced = tmp_path / "balanced.jsonl"
    code, _, _ = run_cli(
        capsys,
        "dataset", "balance",
        "--manifest", str(manifest),
        "--target", "5",
        "--out", str(balanced),
    )
    assert code == 0
    entries = load_manifest(balanced)
    assert len(entries) == 25
    assert sum(1 for e in entries if e.augment is not None) == 10


def test_predict_command(capsys, mini_corpus, mini_rf_model):
    entry = mini_corpus["entries"][0]
    image_path = os.path.join(mini_corpus["root"], entry.image_path)
    code, stdout, _ = run_cli(
        capsys, "predict", "--model", mini_rf_model, "--image", image_path
    )
    assert code == 0
    assert "grade:" in stdout
    assert "color: #" in stdout
    assert "advice:" in stdout


def test_eval_command_matches_library(capsys, mini_corpus, mini_rf_model):
    code, stdout, _ = run_cli(
        capsys,
        "eval",
        "--manifest", str(mini_corpus["manifest"]),
        "--model", mini_rf_model,
        "--split", "test",
    )
    assert code == 0
    lines = dict(line.split(",") for line in stdout.strip().splitlines())
    expected = evaluate_manifest(mini_rf_model, str(mini_corpus["manifest"]), "test")
    assert float(lines["accuracy"]) == pytest.approx(expected.accuracy, abs=1e-6)
    assert float(lines["macro_f1"]) == pytest.approx(expected.macro_f1, abs=1e-6)


def test_eval_report_dir_outputs(capsys, mini_corpus, mini_rf_model, tmp_path):
    report_dir = tmp_path / "figs"
    code, _, _ = run_cli(
        capsys,
        "eval",
        "--manifest", str(mini_corpus["manifest"]),
        "--model", mini_rf_model,
        "--split", "test",
        "--report-dir", str(report_dir),
    )
    assert code == 0
    assert (report_dir / "metrics.csv").exists()
    assert (report_dir / "confusion_matrix.png").exists()
    assert (report_dir / "per_class_f1.png").exists()


def test_synthesize_command(capsys, mini_corpus, tmp_path):
    entry = mini_corpus["entries"][0]
    image_path = os.path.join(mini_corpus["root"], entry.image_path)
    out = tmp_path / "variants"
    code, stdout, _ = run_cli(
        capsys,
        "synthesize",
        "--image", image_path,
        "--out", str(out),
        "--grades", "Good,Very Unhealthy",
        "--seed", "3",
    )
    assert code == 0
    assert (out / "good.png").exists()
    assert (out / "very_unhealthy.png").exists()
    assert "ssim=" in stdout


def test_train_knn_with_selection(capsys, mini_corpus, tmp_path):
    model_path = tmp_path / "model.knn"
    code, stdout, _ = run_cli(
        capsys,
        "train",
        "--model", "knn",
        "--manifest", str(mini_corpus["manifest"]),
        "--out", str(model_path),
        "--k", "3",
        "--keep-fraction", "0.5",
    )
    assert code == 0
    assert model_path.read_text().startswith("SKYCAST-KNN v1")
    code, stdout, _ = run_cli(
        capsys,
        "eval",
        "--manifest", str(mini_corpus["manifest"]),
        "--model", str(model_path),
        "--split", "test",
    )
    assert code == 0
    assert stdout.startswith("accuracy,")


def test_train_cnn_tiny(capsys, tmp_path):
    corpus = tmp_path / "corpus"
    run_cli(capsys, "dataset", "gen", "--out", str(corpus), "--per-grade", "3", "--size", "48")
    run_cli(capsys, "dataset", "split", "--manifest", str(corpus / "manifest.jsonl"))
    model_path = tmp_path / "model.cnn"
    report_dir = tmp_path / "cnnfigs"
    code, stdout, _ = run_cli(
        capsys,
        "train",
        "--model", "cnn",
        "--manifest", str(corpus / "manifest.jsonl"),
        "--out", str(model_path),
        "--arch", "C(2)(3)-S(2)",
        "--size", "16",
        "--epochs", "2",
        "--split", "all",
        "--report-dir", str(report_dir),
    )
    assert code == 0
    assert model_path.read_text().startswith("SKYCAST-CNN v1")
    assert (report_dir / "loss_curve.png").exists()
    assert (report_dir / "loss_history.csv").exists()


def test_bench_outputs_csv(capsys, tmp_path):
    report_dir = tmp_path / "bench"
    code, stdout, _ = run_cli(
        capsys, "bench", "--size", "96", "--report-dir", str(report_dir)
    )
    assert code == 0
    assert stdout.startswith("operation,ms")
    assert (report_dir / "bench.csv").exists()
    assert (report_dir / "bench.png").exists()
