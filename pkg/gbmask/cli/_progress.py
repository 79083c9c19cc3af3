"""Rich progress bars for epoch loops, sweep cells and per-subject passes."""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager

from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TaskID,
    TextColumn,
    TimeElapsedColumn,
)

from ..sweep import Cell, CellCallback, CellResult
from ..training.trainer import EpochCallback
from ._console import console


class StepReporter:
    """One progress task: a fixed label, a step count and a free-form status."""

    def __init__(self, progress: Progress, task_id: TaskID) -> None:
        self._progress = progress
        self._task_id = task_id

    def status(self, message: str) -> None:
        self._progress.update(self._task_id, status=message)

    def advance(self, step: int = 1) -> None:
        self._progress.advance(self._task_id, max(step, 0))


@contextmanager
def progress_task(label: str, total: int) -> Iterator[StepReporter]:
    progress = Progress(
        SpinnerColumn(),
        TextColumn(f"{{task.description:<{max(len(label), 16)}s}}"),
        BarColumn(bar_width=30),
        MofNCompleteColumn(),
        TextColumn("[dim]{task.fields[status]}"),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    )
    with progress:
        yield StepReporter(progress, progress.add_task(label, total=total, status=""))


def epoch_callback(reporter: StepReporter) -> EpochCallback:
    def on_epoch(epoch: int, train_loss: float, val_loss: float, seconds: float) -> None:
        reporter.status(f"epoch {epoch} train={train_loss:.4f} val={val_loss:.4f}")
        reporter.advance()

    return on_epoch


def cell_callback(reporter: StepReporter) -> CellCallback:
    def on_cell(cell: Cell, result: CellResult) -> None:
        reporter.status(f"{cell.name} {result.status}")
        reporter.advance()

    return on_cell
