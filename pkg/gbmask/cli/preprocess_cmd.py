"""Preprocessing of a manifest-indexed dataset."""

from dataclasses import replace
from pathlib import Path

import rich_click as click

from ..config import load_config
from ..errors import EmptyMaskError
from ..manifest import load_subject, read_manifest, save_dataset
from ..phantom import SPLITS, Dataset
from ..pipeline import PreprocessSettings, generate_global_mask_threshold, mask_from_labels, preprocess_subject
from ._console import console, print_outputs
from ._helpers import DataFailure, UsageFailure, cli_errors
from ._progress import progress_task


@click.command()
@click.argument("manifest_path", metavar="MANIFEST", type=click.Path(exists=True, path_type=Path))
@click.option("--outdir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--target-spacing", type=click.FloatRange(min=0, min_open=True), default=None, help="mm (default: preprocess.target_spacing).")
@click.option("--size", type=click.IntRange(min=1), default=None, help="Voxels per axis (default: preprocess.size).")
@click.option(
    "--mask",
    "mask_source",
    type=click.Choice(["manifest", "threshold", "labels"]),
    default="manifest",
    show_default=True,
    help="Global mask: as stored, regenerated by HU threshold, or dilated from labels.",
)
def preprocess(manifest_path: Path, outdir: Path, target_spacing: float | None, size: int | None, mask_source: str):
    """Resample, crop/pad and normalize every subject."""
    with cli_errors("preprocess"):
        prep = load_config()["preprocess"]
        settings = PreprocessSettings(
            target_spacing=target_spacing or prep["target_spacing"],
            size=size or prep["size"],
            hu_window=tuple(prep["hu_window"]),
        )
        manifest = read_manifest(manifest_path)
        if manifest.stage == "preprocessed" and mask_source != "manifest":
            raise UsageFailure("masks can only be regenerated from a raw dataset")

        splits: dict[str, list] = {name: [] for name in SPLITS}
        with progress_task("Preprocessing", len(manifest.entries)) as reporter:
            for entry in manifest.entries:
                subject = load_subject(manifest, entry)
                try:
                    if mask_source == "threshold":
                        mask = generate_global_mask_threshold(subject.ct, prep["threshold_hu"], prep["closing_radius"])
                        subject = replace(subject, global_mask=mask)
                    elif mask_source == "labels":
                        subject = replace(subject, global_mask=mask_from_labels(subject.labels, prep["dilation_radius"]))
                    splits[entry.split].append(preprocess_subject(subject, settings))
                except EmptyMaskError as exc:
                    raise DataFailure(f"subject {entry.id}: {exc}") from exc
                reporter.status(entry.id)
                reporter.advance()

        out = save_dataset(
            Dataset(**splits),
            outdir,
            preset=manifest.preset,
            stage="preprocessed",
            structures=manifest.structures,
        )
    console.print(f"[green]Preprocessed {len(out.entries)} subjects[/green] to {settings.size}³ at {settings.target_spacing} mm")
    print_outputs(out.path)
