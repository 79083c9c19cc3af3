"""Scenario × training-size × seed sweeps with resumable cells.

Each cell trains one model under ``<output_dir>/cells/<cell>/`` and is complete
once its ``result.json`` exists and reads back.  Completed cells are skipped on
rerun and a damaged result is recomputed.  A cell that fails records
``error.txt`` and the sweep moves on.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .config import normalized_worker_count
from .errors import ContractViolation, GbmaskError
from .experiment import ExperimentConfig
from .manifest import load_dataset, read_manifest
from .metrics import EvalReport, evaluate, write_report_csv
from .phantom import Dataset, Subject, generate_dataset, resolve_phantom_spec
from .pipeline import preprocess_subject
from .pipeline.mvol import atomic_write_bytes
from .telemetry import counter, stage, timer
from .training import Scenario, train

log = logging.getLogger(__name__)

RESULT_JSON = "result.json"
ERROR_TXT = "error.txt"
REPORT_CSV = "report.csv"
SWEEP_CSV = "sweep.csv"


@dataclass(frozen=True)
class Cell:
    scenario: Scenario
    n_train: int
    seed: int

    @property
    def name(self) -> str:
        return f"{self.scenario.value.lower()}-n{self.n_train:03d}-s{self.seed}"


@dataclass
class CellResult:
    scenario: str
    n_train: int
    seed: int
    status: str
    dice: dict[str, float] = field(default_factory=dict)
    com_mm: dict[str, float | None] = field(default_factory=dict)
    mean_dice: float = math.nan
    mean_com_mm: float = math.nan
    best_epoch: int = 0
    best_seconds: float = 0.0
    wall_seconds: float = 0.0
    error: str = ""

    @classmethod
    def from_json(cls, path: Path) -> CellResult:
        return cls(**json.loads(path.read_text(encoding="utf-8")))

    def to_json(self, path: Path) -> Path:
        return atomic_write_bytes(path, json.dumps(asdict(self), indent=2, sort_keys=True).encode("utf-8"))


@dataclass
class SweepData:
    dataset: Dataset
    structures: list[str]


@dataclass
class SweepResult:
    rows: list[CellResult]
    output_dir: Path

    @property
    def failed(self) -> list[CellResult]:
        return [r for r in self.rows if r.status == "failed"]


def sweep_cells(config: ExperimentConfig) -> list[Cell]:
    return [
        Cell(scenario, n, seed)
        for scenario in config.scenarios
        for n in config.ladder
        for seed in config.seeds
    ]


def prepare_data(config: ExperimentConfig) -> SweepData:
    """Load or generate the dataset and bring every subject through the preprocessing chain."""
    settings = config.preprocess_settings()
    if config.manifest:
        manifest = read_manifest(config.manifest)
        dataset = load_dataset(manifest)
        structures = manifest.structures
    else:
        spec = resolve_phantom_spec(config.preset, config.phantom_file)
        dataset = generate_dataset(
            spec,
            config.n_train,
            config.n_val,
            config.n_test,
            config.data_seed,
            workers=config.workers,
        )
        structures = spec.structure_names
    with stage(log, "sweep.preprocess", subjects=sum(1 for _ in dataset)):
        processed = Dataset(
            train=[preprocess_subject(s, settings) for s in dataset.train],
            val=[preprocess_subject(s, settings) for s in dataset.val],
            test=[preprocess_subject(s, settings) for s in dataset.test],
        )
    return SweepData(processed, list(structures))


def _summarize(cell: Cell, report: EvalReport, best_epoch: int, best_seconds: float, wall: float) -> CellResult:
    dice, com = {}, {}
    for name in report.structures:
        d, c = report.dice(name), report.com(name)
        dice[name] = d.mean if d else math.nan
        com[name] = c.mean if c else None
    return CellResult(
        scenario=cell.scenario.value,
        n_train=cell.n_train,
        seed=cell.seed,
        status="done",
        dice=dice,
        com_mm=com,
        mean_dice=report.mean_dice,
        mean_com_mm=report.mean_com_mm,
        best_epoch=best_epoch,
        best_seconds=best_seconds,
        wall_seconds=wall,
    )


def run_cell(config: ExperimentConfig, cell: Cell, data: SweepData, cell_dir: Path) -> CellResult:
    """Train on the first ``n_train`` subjects, select on validation, evaluate on test."""
    train_subjects: Sequence[Subject] = data.dataset.train[: cell.n_train]
    started = time.monotonic()
    with stage(log, "sweep.cell", cell=cell.name), timer("sweep.cell_seconds", labels={"scenario": cell.scenario.value}):
        train_config = config.train_config(cell.scenario, len(data.structures), cell.seed, cell_dir)
        model, history = train(train_config, train_subjects, data.dataset.val)
        report = evaluate(model, data.dataset.test, cell.scenario, tau=config.tau, structure_names=data.structures)
        write_report_csv(report, cell_dir / REPORT_CSV)
    result = _summarize(cell, report, history.best_epoch, history.best_seconds, time.monotonic() - started)
    result.to_json(cell_dir / RESULT_JSON)
    return result


def _completed(cell: Cell, done: Path) -> CellResult | None:
    if not done.exists():
        return None
    try:
        result = CellResult.from_json(done)
    except (OSError, ValueError, TypeError) as exc:
        log.warning("sweep_cell_result_unreadable cell=%s error=%s", cell.name, exc)
        return None
    if result.status != "done" or (result.scenario, result.n_train, result.seed) != (
        cell.scenario.value,
        cell.n_train,
        cell.seed,
    ):
        log.warning("sweep_cell_result_mismatch cell=%s", cell.name)
        return None
    return result


def _run_or_skip(config: ExperimentConfig, cell: Cell, data: SweepData, output_dir: Path) -> CellResult:
    cell_dir = output_dir / "cells" / cell.name
    done = cell_dir / RESULT_JSON
    previous = _completed(cell, done)
    if previous is not None:
        counter("sweep.cells", labels={"status": "skipped"})
        log.info("sweep_cell_skipped cell=%s", cell.name)
        return previous
    done.unlink(missing_ok=True)
    cell_dir.mkdir(parents=True, exist_ok=True)
    (cell_dir / ERROR_TXT).unlink(missing_ok=True)
    try:
        result = run_cell(config, cell, data, cell_dir)
    except (GbmaskError, ArithmeticError, ValueError) as exc:
        log.exception("sweep_cell_failed cell=%s", cell.name)
        (cell_dir / ERROR_TXT).write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        counter("sweep.cells", labels={"status": "failed"})
        return CellResult(cell.scenario.value, cell.n_train, cell.seed, status="failed", error=str(exc))
    counter("sweep.cells", labels={"status": "done"})
    return result


CellCallback = Callable[[Cell, CellResult], None]


def run_sweep(
    config: ExperimentConfig,
    *,
    output_dir: Path | None = None,
    data: SweepData | None = None,
    on_cell: CellCallback | None = None,
) -> SweepResult:
    output_dir = Path(output_dir or config.output_dir)
    data = data or prepare_data(config)
    available = len(data.dataset.train)
    if max(config.ladder) > available:
        raise ContractViolation(f"ladder size {max(config.ladder)} exceeds the {available} training subjects")
    if not data.dataset.test:
        raise ContractViolation("sweep needs at least one test subject")

    cells = sweep_cells(config)
    workers = normalized_worker_count(config.workers, 1)
    output_dir.mkdir(parents=True, exist_ok=True)

    def run(cell: Cell) -> CellResult:
        result = _run_or_skip(config, cell, data, output_dir)
        if on_cell is not None:
            on_cell(cell, result)
        return result

    with stage(log, "sweep", cells=len(cells), workers=workers, output_dir=output_dir):
        if workers == 1:
            rows = [run(cell) for cell in cells]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(run, cells))

    result = SweepResult(rows, output_dir)
    write_sweep_csv(result.rows, data.structures, output_dir / SWEEP_CSV)
    if result.failed:
        log.warning("sweep_partial failed=%d of %d", len(result.failed), len(rows))
    return result


def sweep_columns(structures: Sequence[str]) -> list[str]:
    return [
        "scenario",
        "n_train",
        "seed",
        "status",
        *(f"dice_{s}" for s in structures),
        "mean_dice",
        *(f"com_{s}_mm" for s in structures),
        "mean_com_mm",
        "best_epoch",
        "best_seconds",
        "wall_seconds",
    ]


def _cell(value: Any) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_sweep_csv(rows: Sequence[CellResult], structures: Sequence[str], path: Path) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(sweep_columns(structures))
        for r in rows:
            writer.writerow(
                [
                    r.scenario,
                    r.n_train,
                    r.seed,
                    r.status,
                    *(_cell(r.dice.get(s)) for s in structures),
                    _cell(r.mean_dice),
                    *(_cell(r.com_mm.get(s)) for s in structures),
                    _cell(r.mean_com_mm),
                    r.best_epoch,
                    _cell(r.best_seconds),
                    _cell(r.wall_seconds),
                ],
            )
    return path


def read_sweep_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))
