"""Tables and plot columns from a finished sweep."""

from pathlib import Path

import rich_click as click
from rich.table import Table

from .. import report as reports
from ._console import console
from ._helpers import cli_errors

TABLES = ("dice", "com", "curve", "improvement", "timing", "loss", "all")


def _rich(table: dict) -> Table:
    out = Table(title=table["title"])
    for column in table["columns"]:
        out.add_column(str(column), justify="right")
    for row in table["rows"]:
        out.add_row(*(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row))
    return out


@click.command()
@click.argument("sweep_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--table", "which", type=click.Choice(TABLES), default="all", show_default=True)
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["rich", "markdown", "gnuplot"]),
    default="rich",
    show_default=True,
)
@click.option("--n-train", type=click.IntRange(min=1), help="Cell size for loss curves (default: largest).")
@click.option("--seed", type=click.IntRange(min=0), help="Cell seed for loss curves (default: smallest).")
def report(sweep_dir: Path, which: str, fmt: str, n_train: int | None, seed: int | None):
    """Summarize a sweep: Dice and COM by training size, gains, timing and loss curves."""
    with cli_errors("report"):
        sweep = reports.load_sweep(sweep_dir)
        tables: list[dict] = []
        if which in ("dice", "all"):
            tables += reports.dice_by_size(sweep)
        if which in ("com", "all"):
            tables += reports.com_by_size(sweep)
        if which in ("curve", "all"):
            tables.append(reports.mean_dice_curve(sweep))
        if which in ("improvement", "all"):
            tables.append(reports.relative_improvement(sweep))
        if which in ("timing", "all"):
            tables.append(reports.timing(sweep))
        if which in ("loss", "all"):
            tables.append(reports.loss_curves(sweep, n_train, seed))

    for table in tables:
        if fmt == "rich":
            console.print(_rich(table))
        elif fmt == "markdown":
            click.echo(f"### {table['title']}\n")
            click.echo(reports.to_markdown(table) + "\n")
        else:
            click.echo(reports.to_gnuplot(table))
