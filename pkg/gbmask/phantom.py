"""Deterministic synthetic subjects: ellipsoid structures inside an ellipsoid body.

Every subject draws one similarity-style jitter of the body (per-axis scale,
rotation about z, translation) and places its structures at fixed offsets in
the body frame, plus a small independent shift each.  Structures therefore
stay at consistent positions relative to the global mask while varying in
absolute position, size and intensity between subjects.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import normalized_worker_count
from .diffgrid import RngState, derive_seed
from .errors import ContractViolation
from .pipeline import BinaryMask, LabelMap, Volume
from .telemetry import get_collector

log = logging.getLogger(__name__)

Vec3 = tuple[float, float, float]
SPLITS = ("train", "val", "test")


class StructureSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    semi_axes: Vec3 = Field(description="ellipsoid semi-axes in mm (z, y, x)")
    offset: Vec3 = Field(description="center relative to the body center, mm, body frame")
    hu_mean: float
    hu_jitter: float = 0.0

    @model_validator(mode="after")
    def _positive_axes(self) -> StructureSpec:
        if any(a <= 0 for a in self.semi_axes):
            raise ValueError(f"structure {self.name!r} needs positive semi-axes")
        if self.hu_jitter < 0:
            raise ValueError(f"structure {self.name!r} needs hu_jitter >= 0")
        return self


class PhantomSpec(BaseModel):
    """Synthetic population description; validated so structures always stay inside the body."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    dims: tuple[int, int, int] = (48, 48, 48)
    spacing: float = 1.5
    body_semi_axes: Vec3
    body_center: Vec3 = (0.5, 0.5, 0.5)
    structures: tuple[StructureSpec, ...]
    translation_mm: float = 0.0
    scale_range: tuple[float, float] = (1.0, 1.0)
    rotation_deg: float = 0.0
    structure_jitter_mm: float = 0.0
    noise_sigma: float = 0.0
    body_hu: float = 0.0
    background_hu: float = -1000.0

    @model_validator(mode="after")
    def _validate_geometry(self) -> PhantomSpec:
        if not self.structures:
            raise ValueError("a phantom needs at least one structure")
        names = [s.name for s in self.structures]
        if len(set(names)) != len(names):
            raise ValueError(f"structure names must be unique, got {names}")
        if any(d <= 0 for d in self.dims) or self.spacing <= 0:
            raise ValueError("grid dims and spacing must be positive")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        if min(self.translation_mm, self.rotation_deg, self.structure_jitter_mm, self.noise_sigma) < 0:
            raise ValueError("jitter ranges and noise sigma must be >= 0")

        body = np.asarray(self.body_semi_axes)
        if (body <= 0).any():
            raise ValueError("body semi-axes must be positive")
        # triangle inequality in the body frame's normalized metric
        shift = math.sqrt(3.0) * self.structure_jitter_mm / body.min()
        for s in self.structures:
            reach = np.linalg.norm(np.asarray(s.offset) / body) + shift + (np.asarray(s.semi_axes) / body).max()
            if reach > 1.0:
                raise ValueError(f"structure {s.name!r} can leave the body under jitter (reach {reach:.3f} > 1)")

        extent = np.asarray(self.dims) * self.spacing
        center = np.asarray(self.body_center) * extent
        in_plane = hi * max(body[1], body[2])
        half = np.array([hi * body[0], in_plane, in_plane]) + self.translation_mm
        if (center - half < 0).any() or (center + half > extent).any():
            raise ValueError("jittered body does not fit inside the grid")
        return self

    @property
    def structure_names(self) -> list[str]:
        return [s.name for s in self.structures]


@dataclass(eq=False)
class Subject:
    ct: Volume
    labels: LabelMap
    global_mask: BinaryMask
    id: str
    seed: int
    structure_names: list[str] = field(default_factory=list)

    def equals(self, other: Subject) -> bool:
        return (
            self.id == other.id
            and self.seed == other.seed
            and self.ct.equals(other.ct)
            and self.labels.equals(other.labels)
            and self.global_mask.equals(other.global_mask)
        )


@dataclass
class Dataset:
    train: list[Subject]
    val: list[Subject]
    test: list[Subject]

    def split(self, name: str) -> list[Subject]:
        return getattr(self, name)

    def __iter__(self):
        yield from self.train
        yield from self.val
        yield from self.test


def _body_frame(spec: PhantomSpec, scale: np.ndarray, theta: float, shift: np.ndarray) -> list[np.ndarray]:
    """Body-frame coordinates (mm) of every voxel center, per axis."""
    extent = np.asarray(spec.dims) * spec.spacing
    center = np.asarray(spec.body_center) * extent + shift
    z, y, x = (
        (np.arange(n) + 0.5) * spec.spacing - c
        for n, c in zip(spec.dims, center)
    )
    z, y, x = np.meshgrid(z, y, x, indexing="ij", sparse=True)
    cos, sin = math.cos(theta), math.sin(theta)
    # inverse rotation about z, then inverse scale
    by = cos * y + sin * x
    bx = -sin * y + cos * x
    return [z / scale[0], by / scale[1], bx / scale[2]]


def _inside(coords: list[np.ndarray], center: np.ndarray, semi_axes: tuple[float, ...]) -> np.ndarray:
    total = 0.0
    for c, o, a in zip(coords, center, semi_axes):
        total = total + ((c - o) / a) ** 2
    return np.asarray(total <= 1.0)


def generate_subject(spec: PhantomSpec, seed: int, subject_id: str | None = None) -> Subject:
    """Rasterize one subject; fully determined by ``(spec, seed)``."""
    rng = RngState(seed)
    scale = rng.uniform(3, *spec.scale_range)
    theta = math.radians(float(rng.uniform(1, -spec.rotation_deg, spec.rotation_deg)[0]))
    shift = rng.uniform(3, -spec.translation_mm, spec.translation_mm)

    coords = _body_frame(spec, scale, theta, shift)
    body = _inside(coords, np.zeros(3), spec.body_semi_axes)

    labels = np.zeros(spec.dims, dtype=np.uint8)
    hu = np.full(spec.dims, spec.background_hu, dtype=np.float64)
    hu[body] = spec.body_hu
    for index, structure in enumerate(spec.structures, start=1):
        jitter = rng.uniform(3, -spec.structure_jitter_mm, spec.structure_jitter_mm)
        hu_offset = float(rng.uniform(1, -structure.hu_jitter, structure.hu_jitter)[0])
        region = _inside(coords, np.asarray(structure.offset) + jitter, structure.semi_axes)
        if (region & ~body).any():
            raise ContractViolation(f"structure {structure.name!r} escaped the body for seed {seed}")
        # later structures win where ellipsoids overlap
        labels[region] = index
        hu[region] = structure.hu_mean + hu_offset
    if spec.noise_sigma > 0:
        hu += rng.normal(spec.dims, 0.0, spec.noise_sigma)

    spacing = (spec.spacing,) * 3
    get_collector().inc("phantom.subjects")
    return Subject(
        ct=Volume(hu.astype(np.float32), spacing),
        labels=LabelMap(labels, spacing),
        global_mask=BinaryMask(body, spacing),
        id=subject_id or f"subject-{seed}",
        seed=int(seed),
        structure_names=spec.structure_names,
    )


def subject_seed(master_seed: int, split: str, index: int) -> int:
    return derive_seed(master_seed, SPLITS.index(split), index)


def subject_id(split: str, index: int) -> str:
    return f"{split}-{index:03d}"


def generate_dataset(
    spec: PhantomSpec,
    n_train: int,
    n_val: int,
    n_test: int,
    seed: int,
    *,
    workers: int = 1,
) -> Dataset:
    """Generate the three splits; subject k of a split depends only on (seed, split, k)."""
    counts = {"train": n_train, "val": n_val, "test": n_test}
    for split, count in counts.items():
        if count < 0:
            raise ContractViolation(f"{split} count must be >= 0, got {count}")
    jobs = [
        (split, subject_id(split, k), subject_seed(seed, split, k))
        for split, count in counts.items()
        for k in range(count)
    ]
    workers = normalized_worker_count(workers, 1)
    log.info("phantom_dataset_start train=%d val=%d test=%d seed=%d workers=%d", n_train, n_val, n_test, seed, workers)

    def run(job: tuple[str, str, int]) -> Subject:
        _, sid, sseed = job
        return generate_subject(spec, sseed, sid)

    if workers == 1:
        subjects = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            subjects = list(pool.map(run, jobs))

    splits: dict[str, list[Subject]] = {split: [] for split in SPLITS}
    for (split, _, _), subject in zip(jobs, subjects):
        splits[split].append(subject)
    return Dataset(**splits)


BRAIN = PhantomSpec(
    dims=(48, 48, 48),
    spacing=1.5,
    body_semi_axes=(26.0, 28.0, 24.0),
    structures=(
        StructureSpec(name="stem", semi_axes=(11.0, 5.0, 5.0), offset=(-5.0, 6.0, 0.0), hu_mean=60.0, hu_jitter=5.0),
        StructureSpec(name="left_eye", semi_axes=(4.0, 4.0, 4.0), offset=(6.0, -15.0, -8.0), hu_mean=100.0, hu_jitter=5.0),
        StructureSpec(name="right_eye", semi_axes=(4.0, 4.0, 4.0), offset=(6.0, -15.0, 8.0), hu_mean=100.0, hu_jitter=5.0),
    ),
    translation_mm=2.0,
    scale_range=(0.92, 1.08),
    rotation_deg=8.0,
    structure_jitter_mm=1.0,
    noise_sigma=10.0,
    body_hu=20.0,
)


def _chamber(name: str, offset: Vec3, hu: float, semi_axes: Vec3 = (5.0, 5.0, 5.0)) -> StructureSpec:
    return StructureSpec(name=name, semi_axes=semi_axes, offset=offset, hu_mean=hu, hu_jitter=5.0)


HEART = PhantomSpec(
    dims=(48, 48, 48),
    spacing=1.5,
    body_semi_axes=(28.0, 30.0, 30.0),
    structures=(
        _chamber("myo", (-9.0, 8.0, 8.0), 80.0),
        _chamber("la", (9.0, 8.0, 8.0), 150.0),
        _chamber("lv", (-9.0, 8.0, -8.0), 160.0),
        _chamber("ra", (9.0, 8.0, -8.0), 130.0),
        _chamber("rv", (0.0, -10.0, 0.0), 140.0),
        _chamber("aa", (12.0, -6.0, 10.0), 170.0, (4.0, 4.0, 6.0)),
        _chamber("pa", (-12.0, -6.0, -10.0), 120.0, (4.0, 4.0, 6.0)),
    ),
    translation_mm=2.0,
    scale_range=(0.94, 1.06),
    rotation_deg=8.0,
    structure_jitter_mm=1.0,
    noise_sigma=10.0,
    body_hu=40.0,
)

PRESETS: dict[str, PhantomSpec] = {"brain": BRAIN, "heart": HEART}


def load_phantom_spec(path: str | Path) -> PhantomSpec:
    """Read a custom spec from JSON; ``{"preset": name, ...}`` overrides a preset's fields."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    preset = data.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ContractViolation(f"unknown phantom preset {preset!r}; choose from {sorted(PRESETS)}")
        data = {**PRESETS[preset].model_dump(), **data}
    return PhantomSpec.model_validate(data)


def resolve_phantom_spec(preset: str | None = None, phantom_file: str | Path | None = None) -> PhantomSpec:
    if phantom_file:
        return load_phantom_spec(phantom_file)
    name = preset or "brain"
    if name not in PRESETS:
        raise ContractViolation(f"unknown phantom preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]
