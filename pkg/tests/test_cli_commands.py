"""End-to-end tests for the gbmask commands on a tiny phantom."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from gbmask.cli import cli
from gbmask.diffgrid import DiffGrid
from gbmask.manifest import read_manifest
from gbmask.metrics import MEAN_ROW, read_report_csv
from gbmask.pipeline import LabelMap, read_mvol, write_mvol
from gbmask.sweep import SWEEP_CSV, read_sweep_csv
from gbmask.training import BEST_CHECKPOINT, HISTORY_CSV, load_checkpoint
from gbmask.training import trainer as trainer_module


def run(*args: object, code: int = 0):
    result = CliRunner().invoke(cli, [str(a) for a in args])
    assert result.exit_code == code, result.output
    return result


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def spec_file(tmp_path, tiny_spec) -> Path:
    path = tmp_path / "tiny.json"
    path.write_text(tiny_spec.model_dump_json())
    return path


@pytest.fixture
def raw_dir(tmp_path, spec_file) -> Path:
    out = tmp_path / "raw"
    run("phantom", "--spec-file", spec_file, "--train", 3, "--val", 1, "--test", 2, "--seed", 3, "--outdir", out)
    return out


@pytest.fixture
def prep_dir(tmp_path, raw_dir) -> Path:
    out = tmp_path / "prep"
    run("preprocess", raw_dir, "--outdir", out, "--target-spacing", 1.5, "--size", 16)
    return out


def write_experiment(path: Path, manifest: Path, **extra: object) -> Path:
    values = {
        "manifest": manifest / "manifest.tsv",
        "scenarios": "MASK_ONLY",
        "ladder": 1,
        "size": 16,
        "depth": 2,
        "base_channels": 2,
        "max_epochs": 2,
        "lr": 0.01,
        "output_dir": path.parent / "runs",
    }
    values.update(extra)
    path.write_text("".join(f"{key} = {value}\n" for key, value in values.items()))
    return path


# ── phantom / preprocess ─────────────────────────────────────────────────


def test_phantom_writes_triples_and_is_reproducible(tmp_path, spec_file, raw_dir):
    manifest = read_manifest(raw_dir)
    assert len(manifest.entries) == 6
    assert manifest.stage == "raw"
    assert manifest.structures == ["a", "b"]
    assert len(list(raw_dir.rglob("*.mvol"))) == 18

    again = tmp_path / "again"
    run("phantom", "--spec-file", spec_file, "--train", 3, "--val", 1, "--test", 2, "--seed", 3, "--outdir", again)
    assert tree_bytes(again) == tree_bytes(raw_dir)


def test_bad_preset_is_usage_error_listing_presets(tmp_path):
    result = run("phantom", "--preset", "liver", "--outdir", tmp_path / "x", code=1)
    assert "brain" in result.output and "heart" in result.output


def test_preprocess_outputs_requested_size_and_is_idempotent(tmp_path, prep_dir):
    manifest = read_manifest(prep_dir)
    assert manifest.stage == "preprocessed"
    ct = read_mvol(prep_dir / manifest.entries[0].ct, units="normalized")
    assert ct.dims == (16, 16, 16)
    assert 0.0 <= ct.voxels.min() and ct.voxels.max() <= 1.0

    again = tmp_path / "prep-again"
    run("preprocess", prep_dir, "--outdir", again, "--target-spacing", 1.5, "--size", 16)
    assert tree_bytes(again) == tree_bytes(prep_dir)


def test_preprocess_can_regenerate_masks_by_threshold(tmp_path, raw_dir):
    out = tmp_path / "thresholded"
    run("preprocess", raw_dir, "--outdir", out, "--size", 16, "--mask", "threshold")
    manifest = read_manifest(out)
    mask = read_mvol(out / manifest.entries[0].mask)
    assert mask.count > 0


def test_empty_label_mask_names_the_subject(tmp_path, raw_dir):
    manifest = read_manifest(raw_dir)
    entry = manifest.entries[0]
    labels = read_mvol(raw_dir / entry.labels)
    write_mvol(raw_dir / entry.labels, LabelMap(np.zeros(labels.dims), labels.spacing, labels.origin))
    result = run("preprocess", raw_dir, "--outdir", tmp_path / "p", "--size", 16, "--mask", "labels", code=2)
    assert entry.id in result.output


def test_masks_cannot_be_regenerated_from_preprocessed_data(tmp_path, prep_dir):
    run("preprocess", prep_dir, "--outdir", tmp_path / "p", "--mask", "threshold", code=1)


# ── train / evaluate ─────────────────────────────────────────────────────


def test_train_writes_checkpoint_and_history(tmp_path, prep_dir):
    config = write_experiment(tmp_path / "exp.cfg", prep_dir)
    out = tmp_path / "run"
    result = run("train", config, "--outdir", out)
    assert str(out / BEST_CHECKPOINT) in result.output.replace("\n", "")
    checkpoint = load_checkpoint(out / BEST_CHECKPOINT)
    assert checkpoint.model.config.in_channels == 1
    assert len((out / HISTORY_CSV).read_text().splitlines()) == 3


def test_ct_plus_mask_checkpoint_has_two_input_channels(tmp_path, prep_dir):
    config = write_experiment(tmp_path / "exp.cfg", prep_dir)
    run("train", config, "--scenario", "ct_plus_mask", "--outdir", tmp_path / "run")
    checkpoint = load_checkpoint(tmp_path / "run" / BEST_CHECKPOINT)
    assert checkpoint.model.config.in_channels == 2
    assert checkpoint.scenario.value == "CT_PLUS_MASK"


def test_train_without_validation_split_is_usage_error(tmp_path, spec_file):
    raw = tmp_path / "noval"
    run("phantom", "--spec-file", spec_file, "--train", 2, "--val", 0, "--test", 1, "--outdir", raw)
    config = write_experiment(tmp_path / "exp.cfg", raw)
    result = run("train", config, "--outdir", tmp_path / "run", code=1)
    assert "validation" in result.output


def test_train_rejects_oversized_subset(tmp_path, prep_dir):
    config = write_experiment(tmp_path / "exp.cfg", prep_dir)
    run("train", config, "--n-train", 50, code=1)


def test_non_finite_loss_exits_with_numeric_code(tmp_path, prep_dir, monkeypatch):
    real = trainer_module.dice_loss

    def poisoned(pred, target, eps):
        return real(pred, target, eps) * DiffGrid(np.array(np.nan))

    monkeypatch.setattr(trainer_module, "dice_loss", poisoned)
    config = write_experiment(tmp_path / "exp.cfg", prep_dir)
    result = run("train", config, "--outdir", tmp_path / "run", code=3)
    assert "non-finite" in result.output


def test_evaluate_writes_report_with_recomputable_aggregates(tmp_path, prep_dir):
    config = write_experiment(tmp_path / "exp.cfg", prep_dir)
    run("train", config, "--outdir", tmp_path / "run")
    run("evaluate", tmp_path / "run" / BEST_CHECKPOINT, prep_dir, "--outdir", tmp_path / "eval")

    path = tmp_path / "eval" / "report.csv"
    report = read_report_csv(path)
    assert len(report.cells) == 2 * 2
    assert report.subjects == ["test-000", "test-001"]
    assert report.structures == ["a", "b"]
    mean_all = next(line for line in path.read_text().splitlines() if line.startswith(f"{MEAN_ROW},all,"))
    assert float(mean_all.split(",")[2]) == pytest.approx(report.mean_dice, abs=1e-12)


def test_evaluate_on_raw_manifest_preprocesses_first(tmp_path, raw_dir, prep_dir):
    config = write_experiment(tmp_path / "exp.cfg", prep_dir)
    run("train", config, "--outdir", tmp_path / "run")
    run("config", "set", "preprocess.size", "16")
    run("evaluate", tmp_path / "run" / BEST_CHECKPOINT, raw_dir, "--outdir", tmp_path / "raw-eval")
    run("evaluate", tmp_path / "run" / BEST_CHECKPOINT, prep_dir, "--outdir", tmp_path / "prep-eval")
    from_raw = read_report_csv(tmp_path / "raw-eval" / "report.csv")
    from_prep = read_report_csv(tmp_path / "prep-eval" / "report.csv")
    assert [c.dice for c in from_raw.cells] == [c.dice for c in from_prep.cells]
    assert from_raw.mean_com_mm == pytest.approx(from_prep.mean_com_mm, abs=1e-4, nan_ok=True)


def test_evaluate_scenario_mismatch_and_bad_checkpoint(tmp_path, prep_dir):
    config = write_experiment(tmp_path / "exp.cfg", prep_dir)
    run("train", config, "--outdir", tmp_path / "run")
    checkpoint = tmp_path / "run" / BEST_CHECKPOINT
    result = run("evaluate", checkpoint, prep_dir, "--outdir", tmp_path / "e", "--scenario", "CT_ONLY", code=1)
    assert "MASK_ONLY" in result.output

    broken = tmp_path / "broken.mckp"
    broken.write_bytes(b"NOPE" + checkpoint.read_bytes()[4:])
    run("evaluate", broken, prep_dir, "--outdir", tmp_path / "e", code=2)


def test_invalid_experiment_file_is_usage_error(tmp_path, prep_dir):
    config = write_experiment(tmp_path / "exp.cfg", prep_dir, colour="blue")
    result = run("train", config, code=1)
    assert "colour" in result.output


# ── sweep / report ───────────────────────────────────────────────────────


def test_sweep_then_report(tmp_path, prep_dir):
    config = write_experiment(tmp_path / "exp.cfg", prep_dir, scenarios="CT_ONLY, MASK_ONLY, CT_PLUS_MASK", seeds="0, 1")
    out = tmp_path / "sweep"
    metrics = tmp_path / "metrics.json"
    run("sweep", config, "--outdir", out, "--metrics-json", metrics)

    rows = read_sweep_csv(out / SWEEP_CSV)
    assert len(rows) == 6
    assert all(r["status"] == "done" and float(r["wall_seconds"]) > 0 for r in rows)
    counters = json.loads(metrics.read_text())["counters"]
    assert counters["sweep.cells{status=done}"] == 6

    gnuplot = run("report", out, "--table", "curve", "--format", "gnuplot").output
    assert gnuplot.startswith("# Mean Dice versus training size\n# n_train CT_ONLY MASK_ONLY CT_PLUS_MASK\n1 ")
    markdown = run("report", out, "--table", "loss", "--format", "markdown").output
    assert "### Loss curves (n_train=1, seed=0)" in markdown
    run("report", out)

    # a second sweep run only skips
    run("sweep", config, "--outdir", out)
    assert read_sweep_csv(out / SWEEP_CSV) == rows


def test_report_without_sweep_is_data_error(tmp_path):
    run("report", tmp_path, code=2)
