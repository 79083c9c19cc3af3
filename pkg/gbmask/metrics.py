"""Segmentation metrics and per-structure report aggregation."""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Protocol

import numpy as np

from .errors import ContractViolation, DataError
from .pipeline import BinaryMask
from .pipeline.geometry import physical_center_of_mass
from .training.scenario import Scenario, assemble_input

if TYPE_CHECKING:
    from .diffgrid import DiffGrid
    from .phantom import Subject
    from .unet3d import UNetConfig

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("subject_id", "structure", "dice", "com_distance_mm")
MEAN_ROW = "__mean__"
STD_ROW = "__std__"
ALL_STRUCTURES = "all"
STD_HEADER = "# std=population"


class Predictor(Protocol):
    config: UNetConfig

    def predict(self, x: DiffGrid) -> np.ndarray: ...


def threshold_predictions(prob: np.ndarray, tau: float = 0.5, like: BinaryMask | None = None) -> list[BinaryMask]:
    """One mask per structure channel of an S×D×H×W probability grid; voxel set iff prob > tau."""
    if not 0.0 < tau < 1.0:
        raise ContractViolation(f"tau must lie in (0, 1), got {tau}")
    prob = np.asarray(prob)
    if prob.ndim != 4:
        raise ContractViolation(f"expected S×D×H×W probabilities, got shape {prob.shape}")
    spacing = like.spacing if like is not None else (1.0, 1.0, 1.0)
    origin = like.origin if like is not None else (0.0, 0.0, 0.0)
    return [BinaryMask(channel > tau, spacing, origin) for channel in prob]


def dice_coefficient(pred: BinaryMask, gt: BinaryMask) -> float:
    """2|P∩G| / (|P| + |G|); 1 when both are empty."""
    pred.require_geometry(gt)
    p, g = pred.voxels.astype(bool), gt.voxels.astype(bool)
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(p & g)) / total


def center_of_mass(mask: BinaryMask) -> np.ndarray:
    """Mean physical coordinate (z, y, x) of the mask's voxel centers, in mm."""
    return physical_center_of_mass(mask)


def com_distance(pred: BinaryMask, gt: BinaryMask) -> float | None:
    """Euclidean COM distance in mm, or None when either mask is empty."""
    pred.require_geometry(gt)
    if pred.count == 0 or gt.count == 0:
        return None
    return float(np.linalg.norm(center_of_mass(pred) - center_of_mass(gt)))


@dataclass(frozen=True)
class StructureMetrics:
    subject_id: str
    structure: str
    dice: float
    com_distance_mm: float | None

    def __post_init__(self) -> None:
        if not 0.0 <= self.dice <= 1.0:
            raise ContractViolation(f"dice must lie in [0, 1], got {self.dice}")
        if self.com_distance_mm is not None and self.com_distance_mm < 0:
            raise ContractViolation(f"COM distance must be >= 0, got {self.com_distance_mm}")


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    count: int

    @classmethod
    def of(cls, values: Sequence[float]) -> Aggregate | None:
        if not values:
            return None
        array = np.asarray(values, dtype=np.float64)
        return cls(float(array.mean()), float(array.std(ddof=0)), len(values))


@dataclass
class EvalReport:
    cells: list[StructureMetrics] = field(default_factory=list)

    @property
    def structures(self) -> list[str]:
        return list(dict.fromkeys(c.structure for c in self.cells))

    @property
    def subjects(self) -> list[str]:
        return list(dict.fromkeys(c.subject_id for c in self.cells))

    def _select(self, structure: str) -> list[StructureMetrics]:
        if structure == ALL_STRUCTURES:
            return self.cells
        return [c for c in self.cells if c.structure == structure]

    def dice(self, structure: str = ALL_STRUCTURES) -> Aggregate | None:
        return Aggregate.of([c.dice for c in self._select(structure)])

    def com(self, structure: str = ALL_STRUCTURES) -> Aggregate | None:
        """COM statistics over the cells where the distance is defined."""
        return Aggregate.of([c.com_distance_mm for c in self._select(structure) if c.com_distance_mm is not None])

    @property
    def mean_dice(self) -> float:
        agg = self.dice()
        return agg.mean if agg else math.nan

    @property
    def mean_com_mm(self) -> float:
        agg = self.com()
        return agg.mean if agg else math.nan


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_report_csv(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(STD_HEADER + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for c in report.cells:
            writer.writerow([c.subject_id, c.structure, _fmt(c.dice), _fmt(c.com_distance_mm)])
        for structure in [*report.structures, ALL_STRUCTURES]:
            dice, com = report.dice(structure), report.com(structure)
            writer.writerow([MEAN_ROW, structure, _fmt(dice and dice.mean), _fmt(com and com.mean)])
            writer.writerow([STD_ROW, structure, _fmt(dice and dice.std), _fmt(com and com.std)])
    return path


def read_report_csv(path: str | Path) -> EvalReport:
    """Read the per-cell rows; aggregate rows are recomputed, not trusted."""
    with open(path, encoding="utf-8", newline="") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise DataError(f"{path}: expected columns {','.join(REPORT_COLUMNS)}")
    cells = []
    for row in reader:
        if row["subject_id"] in (MEAN_ROW, STD_ROW):
            continue
        com = row["com_distance_mm"]
        cells.append(StructureMetrics(row["subject_id"], row["structure"], float(row["dice"]), float(com) if com else None))
    return EvalReport(cells)


def evaluate(
    model: Predictor,
    subjects: Sequence[Subject],
    scenario: Scenario,
    *,
    tau: float = 0.5,
    structure_names: Sequence[str] | None = None,
) -> EvalReport:
    """Eval-mode prediction per subject, thresholded and scored against its labels."""
    scenario = Scenario.parse(scenario)
    scenario.require_compatible(model.config)
    n_structures = model.config.out_channels
    names = list(structure_names) if structure_names else [f"structure_{k}" for k in range(1, n_structures + 1)]
    if len(names) != n_structures:
        raise ContractViolation(f"{len(names)} structure names given for a model with {n_structures} outputs")

    report = EvalReport()
    for subject in subjects:
        prob = np.asarray(model.predict(assemble_input(scenario, [subject])))
        if prob.shape[:2] != (1, n_structures):
            raise ContractViolation(f"model returned shape {prob.shape}, expected 1×{n_structures}×D×H×W")
        predicted = threshold_predictions(prob[0], tau, like=subject.global_mask)
        for label, (name, pred) in enumerate(zip(names, predicted), start=1):
            gt = subject.labels.structure(label)
            report.cells.append(StructureMetrics(subject.id, name, dice_coefficient(pred, gt), com_distance(pred, gt)))
    log.info("evaluate_done scenario=%s subjects=%d mean_dice=%.4f", scenario.value, len(subjects), report.mean_dice)
    return report
