"""Volume geometry, preprocessing, global mask generation and MVOL files."""

from .geometry import (
    center_voxel,
    crop_or_pad,
    mask_center_of_mass,
    physical_center_of_mass,
    resample_nearest,
    resample_trilinear,
)
from .masks import ball, generate_global_mask_threshold, mask_from_labels, single_channel, stack_channels
from .mvol import read_mvol, write_mvol
from .preprocess import PreprocessedCase, PreprocessSettings, hu_window_normalize, preprocess_case, preprocess_subject
from .volume import BinaryMask, LabelMap, Volume

__all__ = [
    "BinaryMask",
    "LabelMap",
    "PreprocessSettings",
    "PreprocessedCase",
    "Volume",
    "ball",
    "center_voxel",
    "crop_or_pad",
    "generate_global_mask_threshold",
    "hu_window_normalize",
    "mask_center_of_mass",
    "mask_from_labels",
    "physical_center_of_mass",
    "preprocess_case",
    "preprocess_subject",
    "read_mvol",
    "resample_nearest",
    "resample_trilinear",
    "single_channel",
    "stack_channels",
    "write_mvol",
]
