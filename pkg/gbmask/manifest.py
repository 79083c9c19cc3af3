"""Plain-text dataset manifest: ``#`` header lines followed by tab-separated rows.

Header lines are ``# key value``: ``version``, ``preset``, ``stage`` (raw or
preprocessed) and ``structures`` (comma-separated names).  Each row holds
``split id seed ct labels mask`` with file paths relative to the manifest.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from .errors import ManifestError
from .phantom import SPLITS, Dataset, Subject
from .pipeline import BinaryMask, LabelMap, Volume, read_mvol, write_mvol

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.tsv"
COLUMNS = ("split", "id", "seed", "ct", "labels", "mask")
Stage = Literal["raw", "preprocessed"]


@dataclass(frozen=True)
class ManifestEntry:
    split: str
    id: str
    seed: int
    ct: str
    labels: str
    mask: str


@dataclass
class Manifest:
    path: Path
    entries: list[ManifestEntry]
    preset: str = "custom"
    stage: Stage = "raw"
    structures: list[str] = field(default_factory=list)

    @property
    def root(self) -> Path:
        return self.path.parent

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]


def write_manifest(manifest: Manifest) -> Path:
    manifest.path.parent.mkdir(parents=True, exist_ok=True)
    with open(manifest.path, "w", encoding="utf-8", newline="") as handle:
        handle.write(f"# version {MANIFEST_VERSION}\n")
        handle.write(f"# preset {manifest.preset}\n")
        handle.write(f"# stage {manifest.stage}\n")
        handle.write(f"# structures {','.join(manifest.structures)}\n")
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(COLUMNS)
        for e in manifest.entries:
            writer.writerow([e.split, e.id, e.seed, e.ct, e.labels, e.mask])
    return manifest.path


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    header: dict[str, str] = {}
    body: list[str] = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            header[key] = value.strip()
        elif line.strip():
            body.append(line)

    if header.get("version") != str(MANIFEST_VERSION):
        raise ManifestError(f"{path}: unsupported manifest version {header.get('version')!r}")
    stage = header.get("stage", "raw")
    if stage not in ("raw", "preprocessed"):
        raise ManifestError(f"{path}: unknown stage {stage!r}")

    rows = list(csv.reader(body, delimiter="\t"))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ManifestError(f"{path}: expected columns {'/'.join(COLUMNS)}")
    entries = []
    for number, row in enumerate(rows[1:], start=2):
        if len(row) != len(COLUMNS):
            raise ManifestError(f"{path}: row {number} has {len(row)} fields, expected {len(COLUMNS)}")
        split, sid, seed, ct, labels, mask = row
        if split not in SPLITS:
            raise ManifestError(f"{path}: row {number} has unknown split {split!r}")
        try:
            entries.append(ManifestEntry(split, sid, int(seed), ct, labels, mask))
        except ValueError as exc:
            raise ManifestError(f"{path}: row {number} seed {seed!r} is not an integer") from exc

    structures = [s for s in header.get("structures", "").split(",") if s]
    return Manifest(path, entries, header.get("preset", "custom"), stage, structures)  # type: ignore[arg-type]


def _expect(grid: object, cls: type, path: Path) -> None:
    if not isinstance(grid, cls):
        raise ManifestError(f"{path} holds a {type(grid).__name__}, expected {cls.__name__}")


def load_subject(manifest: Manifest, entry: ManifestEntry) -> Subject:
    units = "normalized" if manifest.stage == "preprocessed" else "hu"
    paths = [manifest.root / p for p in (entry.ct, entry.labels, entry.mask)]
    ct, labels, mask = read_mvol(paths[0], units=units), read_mvol(paths[1]), read_mvol(paths[2])
    for grid, cls, p in zip((ct, labels, mask), (Volume, LabelMap, BinaryMask), paths):
        _expect(grid, cls, p)
    return Subject(ct, labels, mask, entry.id, entry.seed, list(manifest.structures))  # type: ignore[arg-type]


def load_dataset(manifest: Manifest) -> Dataset:
    splits = {name: [load_subject(manifest, e) for e in manifest.split(name)] for name in SPLITS}
    log.info("manifest_loaded path=%s subjects=%d stage=%s", manifest.path, len(manifest.entries), manifest.stage)
    return Dataset(**splits)


def save_dataset(
    dataset: Dataset,
    outdir: str | Path,
    *,
    preset: str,
    stage: Stage,
    structures: list[str],
) -> Manifest:
    """Write every subject as three MVOL files and index them in ``outdir/manifest.tsv``."""
    outdir = Path(outdir)
    entries = []
    for split in SPLITS:
        for subject in dataset.split(split):
            rel = {kind: f"{split}/{subject.id}_{kind}.mvol" for kind in ("ct", "labels", "mask")}
            write_mvol(outdir / rel["ct"], subject.ct)
            write_mvol(outdir / rel["labels"], subject.labels)
            write_mvol(outdir / rel["mask"], subject.global_mask)
            entries.append(ManifestEntry(split, subject.id, subject.seed, rel["ct"], rel["labels"], rel["mask"]))
    manifest = Manifest(outdir / MANIFEST_NAME, entries, preset, stage, list(structures))
    write_manifest(manifest)
    log.info("manifest_written path=%s subjects=%d stage=%s", manifest.path, len(entries), stage)
    return manifest
