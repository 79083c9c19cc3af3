"""Tests for segmentation metrics and report aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from gbmask.diffgrid import DiffGrid
from gbmask.errors import ContractViolation, DataError
from gbmask.metrics import (
    MEAN_ROW,
    STD_HEADER,
    EvalReport,
    StructureMetrics,
    center_of_mass,
    com_distance,
    dice_coefficient,
    evaluate,
    read_report_csv,
    threshold_predictions,
    write_report_csv,
)
from gbmask.pipeline import BinaryMask
from gbmask.training import Scenario, assemble_target, dice_loss
from gbmask.unet3d import UNetConfig


def mask(indices, dims=(6, 6, 6), spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    voxels = np.zeros(dims, dtype=np.uint8)
    for index in indices:
        voxels[index] = 1
    return BinaryMask(voxels, spacing)


def test_threshold_is_strict():
    prob = np.array([0.2, 0.5, 0.5000001, 0.9], dtype=np.float64).reshape(1, 1, 1, 4)
    (out,) = threshold_predictions(prob)
    np.testing.assert_array_equal(out.voxels.ravel(), [0, 0, 1, 1])
    with pytest.raises(ContractViolation):
        threshold_predictions(prob, tau=1.0)


def test_dice_cases():
    a = mask([(0, 0, 0), (0, 0, 1), (1, 1, 1), (2, 2, 2)])
    b = mask([(0, 0, 0), (0, 0, 1), (3, 3, 3), (4, 4, 4)])
    assert dice_coefficient(a, a) == 1.0
    assert dice_coefficient(a, b) == 0.5
    assert dice_coefficient(a, b) == dice_coefficient(b, a)
    assert dice_coefficient(a, mask([(5, 5, 5)])) == 0.0
    assert dice_coefficient(mask([]), mask([])) == 1.0
    assert dice_coefficient(mask([]), a) == 0.0


def test_dice_is_one_minus_loss_on_binary_inputs(np_rng):
    for _ in range(10):
        p = (np_rng.uniform(size=(6, 6, 6)) > 0.6).astype(np.uint8)
        g = (np_rng.uniform(size=(6, 6, 6)) > 0.6).astype(np.uint8)
        loss = dice_loss(DiffGrid(p[None, None].astype(np.float64)), g[None, None].astype(np.float64), eps=0.0)
        assert dice_coefficient(BinaryMask(p), BinaryMask(g)) == pytest.approx(1.0 - loss.item(), abs=1e-6)


def test_center_of_mass_uses_voxel_centers():
    np.testing.assert_allclose(center_of_mass(mask([(0, 0, 0)], spacing=(1.5, 1.5, 1.5))), [0.75, 0.75, 0.75])
    np.testing.assert_allclose(center_of_mass(mask([(1, 2, 3), (3, 2, 1)])), [2.5, 2.5, 2.5])


def test_center_of_mass_matches_direct_average(np_rng):
    indices = [tuple(int(v) for v in np_rng.integers(0, 6, 3)) for _ in range(5)]
    m = mask(indices, spacing=(1.5, 0.5, 2.0))
    ones = np.argwhere(m.voxels)
    expected = ((ones + 0.5) * np.array([1.5, 0.5, 2.0])).mean(axis=0)
    np.testing.assert_allclose(center_of_mass(m), expected, atol=1e-6)


def test_com_distance_cases():
    spacing = (1.5, 1.5, 1.5)
    a = mask([(0, 0, 0)], spacing=spacing)
    b = mask([(3, 4, 0)], spacing=spacing)
    assert com_distance(a, b) == pytest.approx(7.5)
    assert com_distance(a, a) == 0.0
    assert com_distance(mask([], spacing=spacing), b) is None
    with pytest.raises(ContractViolation, match="geometry"):
        com_distance(a, mask([(0, 0, 0)]))


def test_com_distance_scales_with_spacing():
    near = com_distance(mask([(0, 0, 0)]), mask([(1, 2, 2)]))
    far = com_distance(mask([(0, 0, 0)], spacing=(2.0, 2.0, 2.0)), mask([(1, 2, 2)], spacing=(2.0, 2.0, 2.0)))
    assert near == pytest.approx(3.0)
    assert far == pytest.approx(2 * near)


def test_aggregation_uses_population_std():
    report = EvalReport(
        [
            StructureMetrics("s1", "a", 0.8, 2.0),
            StructureMetrics("s2", "a", 0.6, None),
            StructureMetrics("s1", "b", 0.4, 4.0),
            StructureMetrics("s2", "b", 0.2, 6.0),
        ],
    )
    assert report.structures == ["a", "b"]
    assert report.dice("a").mean == pytest.approx(0.7)
    assert report.dice("a").std == pytest.approx(0.1)
    assert report.com("a").count == 1
    assert report.mean_dice == pytest.approx(0.5)
    assert report.com().mean == pytest.approx(4.0)
    assert report.com().std == pytest.approx(np.sqrt(8.0 / 3.0))
    assert report.dice("missing") is None


def test_report_csv_round_trip(tmp_path):
    report = EvalReport([StructureMetrics("s1", "a", 0.8, 2.0), StructureMetrics("s2", "a", 0.0, None)])
    path = write_report_csv(report, tmp_path / "report.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == STD_HEADER
    assert lines[1] == "subject_id,structure,dice,com_distance_mm"
    assert lines[3] == "s2,a,0.0,"
    assert any(line.startswith(f"{MEAN_ROW},all,0.4,2.0") for line in lines)
    assert read_report_csv(path) == report


def test_report_csv_with_wrong_columns_is_data_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        read_report_csv(path)


@dataclass
class OracleModel:
    config: UNetConfig
    outputs: list[np.ndarray]

    def predict(self, x: DiffGrid) -> np.ndarray:
        return self.outputs.pop(0)


@dataclass
class ZeroModel:
    config: UNetConfig

    def predict(self, x: DiffGrid) -> np.ndarray:
        return np.zeros((x.shape[0], self.config.out_channels, *x.shape[2:]))


def test_oracle_model_scores_perfectly(tiny_dataset):
    config = UNetConfig(in_channels=2, out_channels=2, base_channels=2, depth=2)
    # softened ground truth: 0.9 inside each structure, 0.1 elsewhere
    outputs = [0.1 + 0.8 * assemble_target([s], 2) for s in tiny_dataset.test]
    report = evaluate(OracleModel(config, outputs), tiny_dataset.test, Scenario.CT_PLUS_MASK, structure_names=["a", "b"])
    assert len(report.cells) == 4
    assert all(c.dice == 1.0 for c in report.cells)
    assert all(c.com_distance_mm == 0.0 for c in report.cells)


def test_zero_model_scores_zero(tiny_dataset):
    config = UNetConfig(in_channels=1, out_channels=2, base_channels=2, depth=2)
    report = evaluate(ZeroModel(config), tiny_dataset.test, Scenario.MASK_ONLY)
    assert report.structures == ["structure_1", "structure_2"]
    assert all(c.dice == 0.0 and c.com_distance_mm is None for c in report.cells)


def test_evaluate_rejects_scenario_mismatch(tiny_dataset):
    config = UNetConfig(in_channels=1, out_channels=2, base_channels=2, depth=2)
    with pytest.raises(ContractViolation):
        evaluate(ZeroModel(config), tiny_dataset.test, Scenario.CT_PLUS_MASK)
    with pytest.raises(ContractViolation, match="structure names"):
        evaluate(ZeroModel(config), tiny_dataset.test, Scenario.CT_ONLY, structure_names=["a"])
