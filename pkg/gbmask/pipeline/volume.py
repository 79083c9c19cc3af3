"""Voxel grids with physical geometry.

Axes are ordered (z, y, x) everywhere; ``origin`` is the physical position of
the outer corner of voxel (0, 0, 0), so the center of voxel ``i`` lies at
``origin + (i + 0.5) * spacing``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import ClassVar, Literal, TypeVar

import numpy as np

from ..errors import ContractViolation

Triple = tuple[float, float, float]
Units = Literal["hu", "normalized"]
Kind = Literal["intensity", "label", "binary"]
G = TypeVar("G", bound="_VoxelGrid")

# mm; MVOL stores geometry as float32
GEOMETRY_ATOL = 1e-4


def _triple(values, what: str) -> Triple:
    out = tuple(float(v) for v in values)
    if len(out) != 3:
        raise ContractViolation(f"{what} needs three components (z, y, x), got {len(out)}")
    return out  # type: ignore[return-value]


@dataclass(eq=False)
class _VoxelGrid:
    voxels: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    kind: ClassVar[Kind]
    dtype: ClassVar[np.dtype]

    def __post_init__(self) -> None:
        self.voxels = np.ascontiguousarray(self.voxels, dtype=self.dtype)
        if self.voxels.ndim != 3:
            raise ContractViolation(f"{self.kind} voxels must be 3-D, got shape {self.voxels.shape}")
        self.spacing = _triple(self.spacing, "spacing")
        self.origin = _triple(self.origin, "origin")
        if any(s <= 0 for s in self.spacing):
            raise ContractViolation(f"spacing components must be > 0, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape  # type: ignore[return-value]

    def same_geometry(self, other: _VoxelGrid) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=0, atol=GEOMETRY_ATOL)
            and np.allclose(self.origin, other.origin, rtol=0, atol=GEOMETRY_ATOL)
        )

    def require_geometry(self, other: _VoxelGrid) -> None:
        if not self.same_geometry(other):
            raise ContractViolation(
                f"geometry mismatch: {self.dims}@{self.spacing}+{self.origin} vs "
                f"{other.dims}@{other.spacing}+{other.origin}",
            )

    def voxel_centers(self, axis: int) -> np.ndarray:
        """Physical coordinates of the voxel centers along ``axis``."""
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.spacing[axis]

    def with_voxels(self: G, voxels: np.ndarray, spacing: Triple | None = None, origin: Triple | None = None) -> G:
        return replace(
            self,
            voxels=voxels,
            spacing=self.spacing if spacing is None else spacing,
            origin=self.origin if origin is None else origin,
        )

    def equals(self, other: _VoxelGrid) -> bool:
        """Same kind, same geometry and bitwise-equal voxels."""
        return (
            type(self) is type(other)
            and self.same_geometry(other)
            and np.array_equal(self.voxels, other.voxels)
        )


@dataclass(eq=False)
class Volume(_VoxelGrid):
    """Scalar intensities; HU until windowed, [0, 1] afterwards."""

    units: Units = "hu"

    kind: ClassVar[Kind] = "intensity"
    dtype: ClassVar[np.dtype] = np.dtype(np.float32)

    @property
    def background(self) -> float:
        return -1000.0 if self.units == "hu" else 0.0

    def equals(self, other: _VoxelGrid) -> bool:
        return super().equals(other) and self.units == other.units  # type: ignore[attr-defined]


@dataclass(eq=False)
class LabelMap(_VoxelGrid):
    """Integer labels, 0 for background and 1..S for structures."""

    kind: ClassVar[Kind] = "label"
    dtype: ClassVar[np.dtype] = np.dtype(np.uint8)
    background: ClassVar[float] = 0

    def structure(self, label: int) -> BinaryMask:
        return BinaryMask(self.voxels == label, self.spacing, self.origin)

    def max_label(self) -> int:
        return int(self.voxels.max(initial=0))


@dataclass(eq=False)
class BinaryMask(_VoxelGrid):
    """A {0, 1} region of interest."""

    kind: ClassVar[Kind] = "binary"
    dtype: ClassVar[np.dtype] = np.dtype(np.uint8)
    background: ClassVar[float] = 0

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.voxels.size and self.voxels.max() > 1:
            raise ContractViolation("binary mask voxels must be 0 or 1")

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.voxels))


AnyGrid = Volume | LabelMap | BinaryMask
