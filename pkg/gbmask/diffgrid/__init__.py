"""Dense grids with reverse-mode differentiation and the layers of a 3D U-Net."""

from .grid import DiffGrid, backward, default_dtype, precision
from .ops import (
    BN_EPSILON,
    BN_MOMENTUM,
    BatchNormState,
    Mode,
    add,
    batchnorm3d,
    concat_channels,
    constant,
    conv3d,
    maxpool3d,
    mul,
    relu,
    sigmoid,
    slice_channels,
    spatial_dropout3d,
    sum_all,
    transposed_conv3d,
)
from .rng import RngState, derive_seed

__all__ = [
    "BN_EPSILON",
    "BN_MOMENTUM",
    "BatchNormState",
    "DiffGrid",
    "Mode",
    "RngState",
    "add",
    "backward",
    "batchnorm3d",
    "concat_channels",
    "constant",
    "conv3d",
    "default_dtype",
    "derive_seed",
    "maxpool3d",
    "mul",
    "precision",
    "relu",
    "sigmoid",
    "slice_channels",
    "spatial_dropout3d",
    "sum_all",
    "transposed_conv3d",
]
