"""Scenario × training-size × seed sweeps."""

from pathlib import Path

import rich_click as click
from rich.table import Table

from .. import telemetry
from ..experiment import load_experiment
from ..sweep import SWEEP_CSV, prepare_data, run_sweep, sweep_cells
from ._console import console, print_outputs, status_icon
from ._helpers import cli_errors
from ._progress import cell_callback, progress_task


@click.command()
@click.argument("config_path", metavar="CONFIG", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--outdir", type=click.Path(file_okay=False, path_type=Path), help="Default: output_dir from CONFIG.")
@click.option("--metrics-json", type=click.Path(dir_okay=False, path_type=Path), help="Write a telemetry snapshot here.")
def sweep(config_path: Path, outdir: Path | None, metrics_json: Path | None):
    """Run every (scenario, n_train, seed) cell; completed cells are skipped."""
    with cli_errors("sweep"):
        config = load_experiment(config_path)
        cells = sweep_cells(config)
        with console.status("Preparing data"):
            data = prepare_data(config)

        with progress_task("Sweep", len(cells)) as reporter:
            result = run_sweep(config, output_dir=outdir, data=data, on_cell=cell_callback(reporter))

    table = Table(title=f"Sweep · {len(result.rows)} cells")
    for column in ("", "scenario", "n_train", "seed", "mean dice", "mean COM mm", "seconds"):
        table.add_column(column, justify="right" if column not in ("", "scenario") else "left")
    for row in result.rows:
        ok = row.status == "done"
        table.add_row(
            status_icon(row.status),
            row.scenario,
            str(row.n_train),
            str(row.seed),
            f"{row.mean_dice:.3f}" if ok else "-",
            f"{row.mean_com_mm:.2f}" if ok else "-",
            f"{row.wall_seconds:.1f}" if ok else row.error[:40],
        )
    console.print(table)
    if result.failed:
        console.print(f"[yellow]{len(result.failed)} cell(s) failed; see error.txt in their cell directories[/yellow]")
    print_outputs(result.output_dir / SWEEP_CSV)
    if metrics_json is not None:
        telemetry.dump_json(metrics_json)
