"""Global binary mask generation and network input assembly."""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

from ..diffgrid import DiffGrid
from ..errors import ContractViolation, EmptyMaskError
from .volume import BinaryMask, LabelMap, Volume

log = logging.getLogger(__name__)

# 6-connectivity: faces only
FACE_CONNECTIVITY = ndimage.generate_binary_structure(3, 1)


def ball(radius: int) -> np.ndarray:
    """Voxel offsets with i² + j² + k² ≤ radius²."""
    if radius < 0:
        raise ContractViolation(f"radius must be >= 0, got {radius}")
    r = int(radius)
    i, j, k = np.ogrid[-r : r + 1, -r : r + 1, -r : r + 1]
    return (i * i + j * j + k * k) <= r * r


def largest_component(region: np.ndarray) -> np.ndarray:
    """Keep the largest 6-connected component; ties go to the lowest label."""
    labeled, count = ndimage.label(region, structure=FACE_CONNECTIVITY)
    if count <= 1:
        return labeled > 0
    sizes = np.bincount(labeled.ravel())[1:]
    return labeled == int(np.argmax(sizes)) + 1


def _close(region: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return region
    padded = np.pad(region, radius)
    closed = ndimage.binary_closing(padded, structure=ball(radius))
    inner = tuple(slice(radius, radius + n) for n in region.shape)
    return closed[inner]


def generate_global_mask_threshold(volume: Volume, threshold: float = -300.0, closing_radius: int = 2) -> BinaryMask:
    """Threshold raw HU, keep the largest component, close it and fill enclosed holes."""
    if volume.units != "hu":
        raise ContractViolation("threshold masks need a raw HU volume")
    if closing_radius < 0:
        raise ContractViolation(f"closing_radius must be >= 0, got {closing_radius}")
    region = volume.voxels > threshold
    if not region.any():
        raise EmptyMaskError(f"no voxel exceeds {threshold} HU")
    region = largest_component(region)
    region = _close(region, closing_radius)
    region = ndimage.binary_fill_holes(region)
    log.debug("threshold_mask threshold=%s closing_radius=%d voxels=%d", threshold, closing_radius, region.sum())
    return BinaryMask(region, volume.spacing, volume.origin)


def mask_from_labels(labels: LabelMap, dilation_radius: int = 2) -> BinaryMask:
    """Union of all structures, dilated by a ball of ``dilation_radius`` voxels."""
    if dilation_radius < 0:
        raise ContractViolation(f"dilation_radius must be >= 0, got {dilation_radius}")
    region = labels.voxels > 0
    if not region.any():
        raise EmptyMaskError("label map has no structure voxels")
    if dilation_radius:
        region = ndimage.binary_dilation(region, structure=ball(dilation_radius))
    return BinaryMask(region, labels.spacing, labels.origin)


def stack_channels(ct: Volume, mask: BinaryMask) -> DiffGrid:
    """1×2×D×H×W grid: normalized CT in channel 0, the mask in channel 1."""
    ct.require_geometry(mask)
    stacked = np.stack([ct.voxels, mask.voxels.astype(ct.voxels.dtype)])
    return DiffGrid(stacked[np.newaxis])


def single_channel(grid: Volume | BinaryMask) -> DiffGrid:
    """1×1×D×H×W grid holding one volume or mask."""
    return DiffGrid(grid.voxels.astype(np.float32)[np.newaxis, np.newaxis])
