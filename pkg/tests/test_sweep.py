"""Tests for resumable sweeps."""

from __future__ import annotations

import json
import shutil

import pytest

from gbmask import sweep as sweep_module
from gbmask import telemetry
from gbmask.errors import ContractViolation, NonFiniteLossError
from gbmask.experiment import ExperimentConfig
from gbmask.sweep import (
    ERROR_TXT,
    RESULT_JSON,
    SWEEP_CSV,
    Cell,
    SweepData,
    prepare_data,
    read_sweep_csv,
    run_sweep,
    sweep_cells,
    sweep_columns,
)
from gbmask.training import Scenario


def experiment(**overrides) -> ExperimentConfig:
    values = {
        "ladder": [1, 2],
        "seeds": [0, 1],
        "size": 16,
        "target_spacing": 1.5,
        "depth": 2,
        "base_channels": 2,
        "max_epochs": 1,
        "lr": 0.01,
    }
    values.update(overrides)
    return ExperimentConfig.from_values(values)


@pytest.fixture
def data(tiny_dataset) -> SweepData:
    return SweepData(tiny_dataset, ["a", "b"])


def skipped() -> float:
    return telemetry.get_collector().counter_value("sweep.cells{status=skipped}")


def test_matrix_order_and_cell_names():
    cells = sweep_cells(experiment())
    assert len(cells) == 12
    assert cells[0] == Cell(Scenario.CT_ONLY, 1, 0)
    assert cells[-1].name == "ct_plus_mask-n002-s1"


def test_sweep_writes_every_cell_and_resumes(tmp_path, data):
    config = experiment()
    result = run_sweep(config, output_dir=tmp_path, data=data)
    assert len(result.rows) == 12
    assert not result.failed
    cell_seconds = telemetry.get_all_metrics()["histograms"]["sweep.cell_seconds{scenario=MASK_ONLY}"]
    assert cell_seconds["count"] == 4
    assert cell_seconds["min"] > 0

    rows = read_sweep_csv(tmp_path / SWEEP_CSV)
    assert len(rows) == 12
    assert list(rows[0]) == sweep_columns(["a", "b"])
    assert all(float(r["wall_seconds"]) > 0 for r in rows)
    assert all(0.0 <= float(r["mean_dice"]) <= 1.0 for r in rows)
    assert {(r["scenario"], r["n_train"], r["seed"]) for r in rows} == {
        (s.value, str(n), str(seed)) for s in Scenario for n in (1, 2) for seed in (0, 1)
    }
    assert (tmp_path / "cells" / "mask_only-n001-s0" / "report.csv").exists()

    victim = tmp_path / "cells" / "ct_only-n002-s1"
    shutil.rmtree(victim)
    telemetry.reset()
    recomputed = []
    run_sweep(config, output_dir=tmp_path, data=data, on_cell=lambda cell, r: recomputed.append(cell))
    assert skipped() == 11
    assert telemetry.get_collector().counter_value("sweep.cells{status=done}") == 1
    assert (victim / RESULT_JSON).exists()
    assert len(recomputed) == 12

    again = {(r["scenario"], r["n_train"], r["seed"]): r for r in read_sweep_csv(tmp_path / SWEEP_CSV)}
    before = {(r["scenario"], r["n_train"], r["seed"]): r for r in rows}
    for key, row in before.items():
        assert again[key]["mean_dice"] == row["mean_dice"]
        assert again[key]["dice_a"] == row["dice_a"]


def test_failed_cell_is_recorded_and_retried(tmp_path, data, monkeypatch):
    config = experiment(ladder=[1], seeds=[0])
    real_train = sweep_module.train

    def flaky(train_config, train_subjects, val_subjects, **kwargs):
        if train_config.scenario is Scenario.MASK_ONLY:
            raise NonFiniteLossError(1, "train-000", float("nan"))
        return real_train(train_config, train_subjects, val_subjects, **kwargs)

    monkeypatch.setattr(sweep_module, "train", flaky)
    result = run_sweep(config, output_dir=tmp_path, data=data)
    assert [r.status for r in result.rows] == ["done", "failed", "done"]
    failed = tmp_path / "cells" / "mask_only-n001-s0"
    assert "NonFiniteLossError" in (failed / ERROR_TXT).read_text()
    assert not (failed / RESULT_JSON).exists()
    rows = read_sweep_csv(tmp_path / SWEEP_CSV)
    assert rows[1]["status"] == "failed"
    assert rows[1]["mean_dice"] == ""

    monkeypatch.setattr(sweep_module, "train", real_train)
    retry = run_sweep(config, output_dir=tmp_path, data=data)
    assert not retry.failed
    assert not (failed / ERROR_TXT).exists()
    assert json.loads((failed / RESULT_JSON).read_text())["status"] == "done"


def test_truncated_result_is_recomputed_on_resume(tmp_path, data):
    config = experiment(ladder=[1], seeds=[0])
    first = run_sweep(config, output_dir=tmp_path, data=data)
    damaged = tmp_path / "cells" / "ct_only-n001-s0" / RESULT_JSON
    damaged.write_text(damaged.read_text()[:40])

    telemetry.reset()
    again = run_sweep(config, output_dir=tmp_path, data=data)
    assert [r.status for r in again.rows] == ["done", "done", "done"]
    assert skipped() == 2
    assert telemetry.get_collector().counter_value("sweep.cells{status=done}") == 1
    assert json.loads(damaged.read_text())["mean_dice"] == pytest.approx(first.rows[0].mean_dice)
    assert not list(damaged.parent.glob(".result.json.*.tmp"))


def test_ladder_larger_than_training_split_is_contract_violation(tmp_path, data):
    with pytest.raises(ContractViolation, match="training subjects"):
        run_sweep(experiment(ladder=[8]), output_dir=tmp_path, data=data)


def test_prepare_data_generates_and_preprocesses(tmp_path, tiny_spec):
    spec_path = tmp_path / "tiny.json"
    spec_path.write_text(tiny_spec.model_dump_json())
    config = experiment(phantom_file=str(spec_path), n_train=2, n_val=1, n_test=1, ladder=[2])
    prepared = prepare_data(config)
    assert prepared.structures == ["a", "b"]
    assert len(prepared.dataset.train) == 2
    assert all(s.ct.units == "normalized" and s.ct.dims == (16, 16, 16) for s in prepared.dataset)
