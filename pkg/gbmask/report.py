"""Summary tables over a finished sweep directory.

Tables are plain ``{"title", "columns", "rows"}`` dicts so the CLI can show
them as rich tables, markdown (tabulate) or gnuplot-ready whitespace columns.
"""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from tabulate import tabulate

from .errors import DataError
from .sweep import SWEEP_CSV, Cell, read_sweep_csv
from .training import HISTORY_CSV, Scenario, read_history_csv

Table = dict


@dataclass(frozen=True)
class SweepTables:
    structures: list[str]
    rows: list[dict[str, str]]
    output_dir: Path

    @property
    def scenarios(self) -> list[str]:
        return [s.value for s in Scenario if any(r["scenario"] == s.value for r in self.rows)]

    @property
    def sizes(self) -> list[int]:
        return sorted({int(r["n_train"]) for r in self.rows})

    def done(self) -> list[dict[str, str]]:
        return [r for r in self.rows if r["status"] == "done"]


def load_sweep(output_dir: str | Path) -> SweepTables:
    output_dir = Path(output_dir)
    path = output_dir / SWEEP_CSV
    if not path.exists():
        raise DataError(f"no {SWEEP_CSV} in {output_dir}; run 'gbmask sweep' first")
    rows = read_sweep_csv(path)
    structures = [key[len("dice_") :] for key in (rows[0] if rows else {}) if key.startswith("dice_")]
    return SweepTables(structures, rows, output_dir)


def _values(rows: Iterable[dict[str, str]], key: str) -> list[float]:
    return [float(r[key]) for r in rows if r.get(key)]


def _mean_std(values: list[float]) -> str:
    if not values:
        return "-"
    return f"{np.mean(values):.3f} ({np.std(values):.3f})"


def _grouped(sweep: SweepTables) -> dict[tuple[str, int], list[dict[str, str]]]:
    groups: dict[tuple[str, int], list[dict[str, str]]] = defaultdict(list)
    for row in sweep.done():
        groups[(row["scenario"], int(row["n_train"]))].append(row)
    return groups


def dice_by_size(sweep: SweepTables) -> list[Table]:
    """One table per scenario: per-structure Dice, mean (std) across seeds, by training size."""
    groups = _grouped(sweep)
    tables = []
    for scenario in sweep.scenarios:
        rows = []
        for n in sweep.sizes:
            cells = groups.get((scenario, n), [])
            rows.append(
                [n, *(_mean_std(_values(cells, f"dice_{s}")) for s in sweep.structures), _mean_std(_values(cells, "mean_dice"))],
            )
        tables.append(
            {"title": f"Dice by training size: {scenario}", "columns": ["n_train", *sweep.structures, "mean"], "rows": rows},
        )
    return tables


def com_by_size(sweep: SweepTables) -> list[Table]:
    groups = _grouped(sweep)
    tables = []
    for scenario in sweep.scenarios:
        rows = []
        for n in sweep.sizes:
            cells = groups.get((scenario, n), [])
            rows.append(
                [n, *(_mean_std(_values(cells, f"com_{s}_mm")) for s in sweep.structures), _mean_std(_values(cells, "mean_com_mm"))],
            )
        tables.append(
            {"title": f"COM distance (mm) by training size: {scenario}", "columns": ["n_train", *sweep.structures, "mean"], "rows": rows},
        )
    return tables


def mean_dice_curve(sweep: SweepTables) -> Table:
    """Average Dice across structures versus training size, one column per scenario."""
    groups = _grouped(sweep)
    rows = []
    for n in sweep.sizes:
        row: list[object] = [n]
        for scenario in sweep.scenarios:
            values = _values(groups.get((scenario, n), []), "mean_dice")
            row.append(round(float(np.mean(values)), 6) if values else math.nan)
        rows.append(row)
    return {"title": "Mean Dice versus training size", "columns": ["n_train", *sweep.scenarios], "rows": rows}


def relative_improvement(sweep: SweepTables) -> Table:
    """Percent gain of CT_PLUS_MASK over CT_ONLY in mean Dice, per training size."""
    curve = mean_dice_curve(sweep)
    columns = curve["columns"]
    rows = []
    if Scenario.CT_ONLY.value in columns and Scenario.CT_PLUS_MASK.value in columns:
        base = columns.index(Scenario.CT_ONLY.value)
        plus = columns.index(Scenario.CT_PLUS_MASK.value)
        for row in curve["rows"]:
            ct, both = row[base], row[plus]
            gain = (both - ct) / ct * 100.0 if ct and not math.isnan(ct) and not math.isnan(both) else math.nan
            rows.append([row[0], ct, both, round(gain, 2) if not math.isnan(gain) else math.nan])
    return {
        "title": "Relative improvement of CT_PLUS_MASK over CT_ONLY",
        "columns": ["n_train", "ct_only", "ct_plus_mask", "improvement_pct"],
        "rows": rows,
    }


def timing(sweep: SweepTables) -> Table:
    """Mean wall-clock seconds per cell and until the selected epoch."""
    groups = _grouped(sweep)
    rows = []
    for scenario in sweep.scenarios:
        for n in sweep.sizes:
            cells = groups.get((scenario, n), [])
            if not cells:
                continue
            rows.append(
                [
                    scenario,
                    n,
                    round(float(np.mean(_values(cells, "best_seconds"))), 3),
                    round(float(np.mean(_values(cells, "wall_seconds"))), 3),
                    round(float(np.mean([int(r["best_epoch"]) for r in cells])), 1),
                ],
            )
    return {
        "title": "Training time",
        "columns": ["scenario", "n_train", "best_seconds", "wall_seconds", "best_epoch"],
        "rows": rows,
    }


def loss_curves(sweep: SweepTables, n_train: int | None = None, seed: int | None = None) -> Table:
    """Per-epoch training and validation loss of each scenario for one (n_train, seed) cell."""
    n_train = n_train if n_train is not None else max(sweep.sizes)
    seed = seed if seed is not None else min(int(r["seed"]) for r in sweep.rows)
    histories = {}
    for scenario in sweep.scenarios:
        path = sweep.output_dir / "cells" / Cell(Scenario(scenario), n_train, seed).name / HISTORY_CSV
        if path.exists():
            histories[scenario] = read_history_csv(path)
    epochs = max((h.epochs for h in histories.values()), default=0)
    columns = ["epoch"]
    for scenario in histories:
        columns += [f"{scenario}_train", f"{scenario}_val"]
    rows = []
    for epoch in range(epochs):
        row: list[object] = [epoch + 1]
        for history in histories.values():
            if epoch < history.epochs:
                row += [history.train_loss[epoch], history.val_loss[epoch]]
            else:
                row += [math.nan, math.nan]
        rows.append(row)
    return {"title": f"Loss curves (n_train={n_train}, seed={seed})", "columns": columns, "rows": rows}


def to_markdown(table: Table) -> str:
    if not table["columns"] and not table["rows"]:
        return ""
    return tabulate(table["rows"], headers=table["columns"], tablefmt="github")


def to_gnuplot(table: Table) -> str:
    """Whitespace-separated columns with a ``#`` header; missing values as ``NaN``."""

    def cell(value: object) -> str:
        if isinstance(value, float) and math.isnan(value):
            return "NaN"
        if isinstance(value, str):
            return value.replace(" ", "_")
        return str(value)

    lines = [f"# {table['title']}", "# " + " ".join(table["columns"])]
    lines += [" ".join(cell(v) for v in row) for row in table["rows"]]
    return "\n".join(lines) + "\n"
