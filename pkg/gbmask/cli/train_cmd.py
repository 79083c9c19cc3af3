"""Single training run."""

from pathlib import Path

import rich_click as click
from rich.table import Table

from ..experiment import load_experiment
from ..sweep import Cell, prepare_data
from ..training import BEST_CHECKPOINT, HISTORY_CSV, Scenario, train
from ._console import console, print_outputs
from ._helpers import UsageFailure, cli_errors
from ._progress import epoch_callback, progress_task

SCENARIOS = [s.value for s in Scenario]


@click.command("train")
@click.argument("config_path", metavar="CONFIG", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--scenario", type=click.Choice(SCENARIOS, case_sensitive=False), help="Default: first configured scenario.")
@click.option("--n-train", type=click.IntRange(min=1), help="Use the first N training subjects (default: all).")
@click.option("--seed", type=click.IntRange(min=0), help="Training seed (default: first configured seed).")
@click.option("--outdir", type=click.Path(file_okay=False, path_type=Path), help="Default: <output_dir>/train/<run>.")
def train_command(config_path: Path, scenario: str | None, n_train: int | None, seed: int | None, outdir: Path | None):
    """Train one model and keep the checkpoint that is best on validation."""
    with cli_errors("train"):
        config = load_experiment(config_path)
        chosen = Scenario.parse(scenario) if scenario else config.scenarios[0]
        seed = config.seeds[0] if seed is None else seed
        with console.status("Preparing data"):
            data = prepare_data(config)
        available = len(data.dataset.train)
        n_train = n_train or available
        if n_train > available:
            raise UsageFailure(f"--n-train {n_train} exceeds the {available} training subjects")
        run = Cell(chosen, n_train, seed)
        outdir = outdir or Path(config.output_dir) / "train" / run.name
        train_config = config.train_config(chosen, len(data.structures), seed, outdir)

        with progress_task(f"Training {chosen.value}", config.max_epochs) as reporter:
            _, history = train(
                train_config,
                data.dataset.train[:n_train],
                data.dataset.val,
                on_epoch=epoch_callback(reporter),
            )

    table = Table(title=f"{chosen.value} · n_train={n_train} · seed={seed}")
    table.add_column("in_channels", justify="right")
    table.add_column("best epoch", justify="right")
    table.add_column("best val loss", justify="right")
    table.add_column("seconds to best", justify="right")
    table.add_column("total seconds", justify="right")
    table.add_row(
        str(train_config.unet.in_channels),
        str(history.best_epoch),
        f"{history.best_val_loss:.4f}",
        f"{history.best_seconds:.1f}",
        f"{history.total_seconds:.1f}",
    )
    console.print(table)
    print_outputs(outdir / BEST_CHECKPOINT, outdir / HISTORY_CSV)
