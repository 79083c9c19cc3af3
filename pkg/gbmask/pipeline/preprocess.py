"""Intensity windowing and the resample → crop/pad → normalize chain."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from ..errors import ContractViolation
from ..telemetry import get_collector, stage
from .geometry import center_voxel, crop_or_pad, mask_center_of_mass, resample_nearest, resample_trilinear
from .volume import BinaryMask, LabelMap, Volume

if TYPE_CHECKING:
    from ..phantom import Subject

log = logging.getLogger(__name__)

HU_WINDOW = (-200.0, 200.0)


@dataclass(frozen=True)
class PreprocessSettings:
    target_spacing: float = 1.5
    size: int = 128
    hu_window: tuple[float, float] = HU_WINDOW

    def __post_init__(self) -> None:
        if self.target_spacing <= 0:
            raise ContractViolation(f"target_spacing must be > 0, got {self.target_spacing}")
        if self.size <= 0:
            raise ContractViolation(f"size must be > 0, got {self.size}")
        lo, hi = self.hu_window
        if lo >= hi:
            raise ContractViolation(f"HU window needs lo < hi, got [{lo}, {hi}]")


@dataclass
class PreprocessedCase:
    ct: Volume
    labels: LabelMap | None
    mask: BinaryMask | None


def hu_window_normalize(volume: Volume, lo: float = HU_WINDOW[0], hi: float = HU_WINDOW[1]) -> Volume:
    """Map ``[lo, hi]`` HU linearly onto ``[0, 1]``, clamping outside the window."""
    if lo >= hi:
        raise ContractViolation(f"HU window needs lo < hi, got [{lo}, {hi}]")
    scaled = (volume.voxels.astype(np.float64) - lo) / (hi - lo)
    return replace(volume, voxels=np.clip(scaled, 0.0, 1.0).astype(np.float32), units="normalized")


def preprocess_case(
    ct: Volume,
    labels: LabelMap | None = None,
    mask: BinaryMask | None = None,
    settings: PreprocessSettings | None = None,
    *,
    case_id: str = "",
) -> PreprocessedCase:
    """Resample to isotropic spacing, crop around the mask COM, then window.

    Labels and mask follow the same geometry with nearest-center resampling.
    The window is centered on the global mask's center of mass when a mask is
    given and on the volume center otherwise.  A CT that is already
    normalized is not windowed again, so the chain is idempotent.
    """
    settings = settings or PreprocessSettings()
    for other in (labels, mask):
        if other is not None:
            ct.require_geometry(other)

    with stage(log, "preprocess", case=case_id or None, dims="x".join(map(str, ct.dims))):
        target = settings.target_spacing
        ct = resample_trilinear(ct, target)
        labels = resample_nearest(labels, target) if labels is not None else None
        mask = resample_nearest(mask, target) if mask is not None else None

        center = mask_center_of_mass(mask) if mask is not None and mask.count else center_voxel(ct)
        ct = crop_or_pad(ct, settings.size, center)
        labels = crop_or_pad(labels, settings.size, center) if labels is not None else None
        mask = crop_or_pad(mask, settings.size, center) if mask is not None else None

        if ct.units == "hu":
            ct = hu_window_normalize(ct, *settings.hu_window)

    get_collector().inc("pipeline.preprocessed")
    return PreprocessedCase(ct=ct, labels=labels, mask=mask)


def preprocess_subject(subject: Subject, settings: PreprocessSettings | None = None) -> Subject:
    case = preprocess_case(subject.ct, subject.labels, subject.global_mask, settings, case_id=subject.id)
    return replace(subject, ct=case.ct, labels=case.labels, global_mask=case.mask)
