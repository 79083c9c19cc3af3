"""Evaluation of a checkpoint on a manifest split."""

from pathlib import Path

import rich_click as click
from rich.table import Table

from ..config import load_config
from ..manifest import load_subject, read_manifest
from ..metrics import evaluate, write_report_csv
from ..phantom import SPLITS
from ..pipeline import PreprocessSettings, preprocess_subject
from ..training import Scenario, load_checkpoint
from ._console import console, mean_std, print_outputs
from ._helpers import UsageFailure, cli_errors

REPORT_NAME = "report.csv"


@click.command("evaluate")
@click.argument("checkpoint_path", metavar="CHECKPOINT", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("manifest_path", metavar="MANIFEST", type=click.Path(exists=True, path_type=Path))
@click.option("--split", type=click.Choice(list(SPLITS)), default="test", show_default=True)
@click.option("--outdir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--scenario", type=click.Choice([s.value for s in Scenario], case_sensitive=False), help="Assert the checkpoint's scenario.")
@click.option("--tau", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=None, help="Default: preprocess.tau.")
def evaluate_command(checkpoint_path: Path, manifest_path: Path, split: str, outdir: Path, scenario: str | None, tau: float | None):
    """Score a checkpoint: per-subject, per-structure Dice and COM distance."""
    with cli_errors("evaluate"):
        prep = load_config()["preprocess"]
        checkpoint = load_checkpoint(checkpoint_path)
        if scenario and Scenario.parse(scenario) is not checkpoint.scenario:
            raise UsageFailure(f"checkpoint was trained for {checkpoint.scenario.value}, not {scenario.upper()}")
        manifest = read_manifest(manifest_path)
        subjects = [load_subject(manifest, e) for e in manifest.split(split)]
        if not subjects:
            raise UsageFailure(f"manifest has no {split} subjects")
        if manifest.stage == "raw":
            settings = PreprocessSettings(prep["target_spacing"], prep["size"], tuple(prep["hu_window"]))
            subjects = [preprocess_subject(s, settings) for s in subjects]
        structures = manifest.structures or None
        with console.status(f"Evaluating {len(subjects)} subjects"):
            report = evaluate(
                checkpoint.model,
                subjects,
                checkpoint.scenario,
                tau=tau or prep["tau"],
                structure_names=structures,
            )
        path = write_report_csv(report, outdir / REPORT_NAME)

    table = Table(title=f"{checkpoint.scenario.value} · {split} · {len(subjects)} subjects")
    table.add_column("structure")
    table.add_column("dice mean (std)", justify="right")
    table.add_column("COM mm mean (std)", justify="right")
    for name in [*report.structures, "all"]:
        dice, com = report.dice(name), report.com(name)
        table.add_row(
            name,
            mean_std(dice and dice.mean, dice and dice.std),
            mean_std(com and com.mean, com and com.std, digits=2),
        )
    console.print(table)
    print_outputs(path)
