"""Resampling and cropping in physical coordinates."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from scipy import ndimage

from ..errors import ContractViolation, EmptyMaskError
from .volume import BinaryMask, G, LabelMap, Triple, Volume

log = logging.getLogger(__name__)


def _target(target_spacing: float | Sequence[float]) -> Triple:
    if np.isscalar(target_spacing):
        target = (float(target_spacing),) * 3  # type: ignore[arg-type]
    else:
        target = tuple(float(s) for s in target_spacing)  # type: ignore[union-attr]
    if len(target) != 3 or any(s <= 0 for s in target):
        raise ContractViolation(f"target spacing must be three values > 0, got {target_spacing!r}")
    return target  # type: ignore[return-value]


def _resampled_dims(grid: G, target: Triple) -> tuple[int, int, int]:
    if 0 in grid.dims:
        raise ContractViolation(f"cannot resample a degenerate grid with dims {grid.dims}")
    extent = np.asarray(grid.dims) * np.asarray(grid.spacing) / np.asarray(target)
    return tuple(max(1, int(n)) for n in np.floor(extent + 0.5))  # type: ignore[return-value]


def _source_coordinates(grid: G, target: Triple, dims: tuple[int, int, int]) -> list[np.ndarray]:
    """Fractional source indices of each output voxel center, per axis, clamped to the hull."""
    coords = []
    for axis in range(3):
        centers = (np.arange(dims[axis]) + 0.5) * target[axis]
        source = centers / grid.spacing[axis] - 0.5
        coords.append(np.clip(source, 0.0, grid.dims[axis] - 1))
    return coords


def _is_identity(grid: G, target: Triple) -> bool:
    return np.allclose(grid.spacing, target, rtol=0, atol=1e-9)


def resample_trilinear(volume: Volume, target_spacing: float | Sequence[float]) -> Volume:
    target = _target(target_spacing)
    dims = _resampled_dims(volume, target)
    if _is_identity(volume, target):
        return volume.with_voxels(volume.voxels.copy())
    axes = _source_coordinates(volume, target, dims)
    coordinates = np.stack(np.meshgrid(*axes, indexing="ij"))
    values = ndimage.map_coordinates(volume.voxels.astype(np.float64), coordinates, order=1, mode="nearest")
    return volume.with_voxels(values.astype(np.float32), spacing=target)


def resample_nearest(grid: G, target_spacing: float | Sequence[float]) -> G:
    """Nearest-center resampling for label maps and masks; no new values can appear."""
    if isinstance(grid, Volume):
        raise ContractViolation("use resample_trilinear for intensity volumes")
    target = _target(target_spacing)
    dims = _resampled_dims(grid, target)
    if _is_identity(grid, target):
        return grid.with_voxels(grid.voxels.copy())
    index = [
        np.minimum(np.floor(c + 0.5).astype(np.intp), grid.dims[axis] - 1)
        for axis, c in enumerate(_source_coordinates(grid, target, dims))
    ]
    return grid.with_voxels(grid.voxels[np.ix_(*index)], spacing=target)


def crop_or_pad(grid: G, size: int | Sequence[int], center: Sequence[float]) -> G:
    """Cut a ``size`` window centered on voxel ``center``, padding overflow with background."""
    shape = (int(size),) * 3 if np.isscalar(size) else tuple(int(s) for s in size)  # type: ignore[arg-type,union-attr]
    if len(shape) != 3 or any(s <= 0 for s in shape):
        raise ContractViolation(f"crop size must be three values > 0, got {size!r}")
    start = [int(np.floor(float(c) + 0.5)) - s // 2 for c, s in zip(center, shape)]

    out = np.full(shape, grid.background, dtype=grid.dtype)
    src, dst = [], []
    for axis in range(3):
        lo = max(start[axis], 0)
        hi = min(start[axis] + shape[axis], grid.dims[axis])
        if hi <= lo:
            src = dst = None
            break
        src.append(slice(lo, hi))
        dst.append(slice(lo - start[axis], hi - start[axis]))
    if src is not None:
        out[tuple(dst)] = grid.voxels[tuple(src)]

    origin = tuple(o + s * sp for o, s, sp in zip(grid.origin, start, grid.spacing))
    return grid.with_voxels(out, origin=origin)  # type: ignore[arg-type]


def center_voxel(grid: G) -> tuple[float, float, float]:
    return tuple((d - 1) / 2.0 for d in grid.dims)  # type: ignore[return-value]


def mask_center_of_mass(mask: BinaryMask | LabelMap) -> tuple[float, float, float]:
    """Mean voxel index of the nonzero voxels."""
    region = mask.voxels > 0
    if not region.any():
        raise EmptyMaskError("center of mass of an empty mask is undefined")
    return tuple(float(c) for c in ndimage.center_of_mass(region))  # type: ignore[return-value]


def physical_center_of_mass(mask: BinaryMask) -> np.ndarray:
    """Center of mass in mm."""
    com = np.asarray(mask_center_of_mass(mask))
    return np.asarray(mask.origin) + (com + 0.5) * np.asarray(mask.spacing)
