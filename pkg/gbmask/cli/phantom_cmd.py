"""Synthetic dataset generation."""

from pathlib import Path

import rich_click as click

from ..manifest import save_dataset
from ..phantom import PRESETS, generate_dataset, resolve_phantom_spec
from ._console import console, print_outputs
from ._helpers import cli_errors, config_default


@click.command()
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="brain", show_default=True, help="Built-in phantom.")
@click.option("--spec-file", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Custom phantom spec (JSON).")
@click.option("--train", "n_train", type=click.IntRange(min=0), default=16, show_default=True)
@click.option("--val", "n_val", type=click.IntRange(min=0), default=4, show_default=True)
@click.option("--test", "n_test", type=click.IntRange(min=0), default=4, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Master seed.")
@click.option("--outdir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Threads (default: runtime.max_workers).")
def phantom(
    preset: str,
    spec_file: Path | None,
    n_train: int,
    n_val: int,
    n_test: int,
    seed: int,
    outdir: Path,
    workers: int | None,
):
    """Generate phantom subjects as MVOL files plus a manifest."""
    with cli_errors("phantom"):
        workers = workers or config_default("runtime", "max_workers")
        spec = resolve_phantom_spec(preset, spec_file)
        with console.status(f"Generating {n_train + n_val + n_test} subjects"):
            dataset = generate_dataset(spec, n_train, n_val, n_test, seed, workers=workers)
        name = spec_file.stem if spec_file else preset
        manifest = save_dataset(dataset, outdir, preset=name, stage="raw", structures=spec.structure_names)
    console.print(f"[green]Wrote {len(manifest.entries)} subjects[/green]")
    print_outputs(manifest.path)
