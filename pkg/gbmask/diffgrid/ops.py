"""Differentiable layer operations over N×C×D×H×W grids.

Each op computes its forward value with numpy and records a closure that maps
the upstream gradient to one gradient per parent.  Reductions accumulate in
float64 and cast back to the working dtype.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np

from ..errors import ContractViolation
from .grid import DiffGrid, default_dtype

if TYPE_CHECKING:
    from .rng import RngState

Mode = Literal["train", "eval"]

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1
_SPATIAL_AXES = (0, 2, 3, 4)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ContractViolation(message)


def _require_5d(x: DiffGrid, label: str) -> None:
    _require(x.ndim == 5, f"{label} must be N×C×D×H×W, got shape {x.shape}")
    _require(all(extent >= 1 for extent in x.shape), f"{label} has a non-positive extent: {x.shape}")


def _channel_view(values: np.ndarray) -> np.ndarray:
    return values.reshape(1, -1, 1, 1, 1)


def _training(mode: Mode) -> bool:
    _require(mode in ("train", "eval"), f"mode must be 'train' or 'eval', got {mode!r}")
    return mode == "train"


# -- elementwise and reductions --


def add(a: DiffGrid, b: DiffGrid) -> DiffGrid:
    _require(a.shape == b.shape, f"add needs equal shapes, got {a.shape} and {b.shape}")
    return DiffGrid.from_op(a.value + b.value, (a, b), lambda g: (g, g), "add")


def mul(a: DiffGrid, b: DiffGrid) -> DiffGrid:
    _require(a.shape == b.shape, f"mul needs equal shapes, got {a.shape} and {b.shape}")
    av, bv = a.value, b.value
    return DiffGrid.from_op(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def sum_all(x: DiffGrid) -> DiffGrid:
    dtype = x.dtype
    total = np.asarray(x.value.sum(dtype=np.float64), dtype=dtype)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.full_like(x.value, g.reshape(-1)[0]),)

    return DiffGrid.from_op(total, (x,), _backward, "sum")


def sigmoid(x: DiffGrid) -> DiffGrid:
    xv = x.value
    e = np.exp(-np.abs(xv))
    y = np.where(xv >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(xv.dtype, copy=False)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * y * (1.0 - y),)

    return DiffGrid.from_op(y, (x,), _backward, "sigmoid")


def relu(x: DiffGrid) -> DiffGrid:
    xv = x.value
    active = xv > 0
    return DiffGrid.from_op(np.where(active, xv, 0).astype(xv.dtype), (x,), lambda g: (g * active,), "relu")


# -- channel plumbing --


def concat_channels(a: DiffGrid, b: DiffGrid) -> DiffGrid:
    _require(a.ndim == b.ndim and a.ndim >= 2, f"concat needs grids of equal rank, got {a.shape} and {b.shape}")
    _require(
        a.shape[0] == b.shape[0] and a.shape[2:] == b.shape[2:],
        f"concat needs equal N and spatial extents, got {a.shape} and {b.shape}",
    )
    split = a.shape[1]

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g[:, :split], g[:, split:]

    return DiffGrid.from_op(np.concatenate([a.value, b.value], axis=1), (a, b), _backward, "concat")


def slice_channels(x: DiffGrid, start: int, stop: int) -> DiffGrid:
    _require(0 <= start < stop <= x.shape[1], f"channel slice [{start}:{stop}] outside 0..{x.shape[1]}")

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.value)
        full[:, start:stop] = g
        return (full,)

    return DiffGrid.from_op(x.value[:, start:stop].copy(), (x,), _backward, "slice")


# -- convolutions --


def _im2col(xp: np.ndarray, k: int) -> np.ndarray:
    """Rows of flattened ``cin×k×k×k`` receptive fields, one per (sample, output voxel)."""
    cin = xp.shape[1]
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k, k), axis=(2, 3, 4))
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 4, 1, 5, 6, 7)).reshape(-1, cin * k**3)


def _correlate(xp: np.ndarray, wv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Valid cross-correlation of an already padded grid; also returns the im2col matrix."""
    n = xp.shape[0]
    cout, k = wv.shape[0], wv.shape[2]
    do, ho, wo = (extent - k + 1 for extent in xp.shape[2:])
    cols = _im2col(xp, k)
    out = cols @ wv.reshape(cout, -1).T
    return np.ascontiguousarray(out.reshape(n, do, ho, wo, cout).transpose(0, 4, 1, 2, 3)), cols


def conv3d(x: DiffGrid, weight: DiffGrid, bias: DiffGrid | None = None, *, padding: int | None = None) -> DiffGrid:
    """Stride-1 cubic convolution; ``padding`` defaults to ``k // 2`` (same extents for odd k)."""
    _require_5d(x, "conv3d input")
    _require_5d(weight, "conv3d weight")
    n, cin, d, h, w = x.shape
    cout, wcin, k, k1, k2 = weight.shape
    _require(wcin == cin, f"conv3d input has {cin} channels but weight expects {wcin}")
    _require(k == k1 == k2, f"conv3d kernel must be cubic, got {weight.shape[2:]}")
    if bias is not None:
        _require(bias.shape == (cout,), f"conv3d bias must have shape ({cout},), got {bias.shape}")
    p = k // 2 if padding is None else padding
    _require(p >= 0, f"conv3d padding must be non-negative, got {p}")

    xp = np.pad(x.value, ((0, 0), (0, 0), (p, p), (p, p), (p, p))) if p else x.value
    _require(
        min(d, h, w) + 2 * p - k + 1 >= 1,
        f"conv3d kernel {k} does not fit input extents {(d, h, w)} with padding {p}",
    )
    wv = weight.value
    out, cols = _correlate(xp, wv)
    if bias is not None:
        out += _channel_view(bias.value)
    if not weight.requires_grad:
        cols = None

    def _backward(g: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None, np.ndarray | None]:
        gw = None
        if cols is not None:
            g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 4, 1)).reshape(-1, cout)
            gw = (g2.T @ cols).reshape(wv.shape)
        gx = None
        if x.requires_grad:
            # full correlation of the output gradient with the flipped, channel-swapped kernel
            q = k - 1
            gp = np.pad(g, ((0, 0), (0, 0), (q, q), (q, q), (q, q)))
            flipped = np.ascontiguousarray(wv[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4))
            gx, _ = _correlate(gp, flipped)
            if p:
                gx = gx[:, :, p : p + d, p : p + h, p : p + w]
        gb = None
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=_SPATIAL_AXES, dtype=np.float64).astype(g.dtype)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return DiffGrid.from_op(out, parents, _backward, "conv3d")


def transposed_conv3d(x: DiffGrid, weight: DiffGrid, bias: DiffGrid | None = None, *, stride: int = 2) -> DiffGrid:
    """Learned up-sampling: kernel equals stride, so each input voxel scatters into its own block.

    ``weight`` has layout Cin×Cout×s×s×s.
    """
    _require_5d(x, "transposed_conv3d input")
    _require_5d(weight, "transposed_conv3d weight")
    n, cin, d, h, w = x.shape
    wcin, cout, s, s1, s2 = weight.shape
    _require(stride == 2, f"transposed_conv3d supports stride 2 only, got {stride}")
    _require(s == s1 == s2 == stride, f"transposed_conv3d kernel must be {stride}³, got {weight.shape[2:]}")
    _require(wcin == cin, f"transposed_conv3d input has {cin} channels but weight expects {wcin}")
    if bias is not None:
        _require(bias.shape == (cout,), f"transposed_conv3d bias must have shape ({cout},), got {bias.shape}")

    wv = weight.value
    xv = x.value
    out = np.einsum("ncdhw,coijk->nodihjwk", xv, wv, optimize=True).reshape(n, cout, s * d, s * h, s * w)
    if bias is not None:
        out += _channel_view(bias.value)

    def _backward(g: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None, np.ndarray | None]:
        blocks = g.reshape(n, cout, d, s, h, s, w, s)
        gx = np.einsum("nodihjwk,coijk->ncdhw", blocks, wv, optimize=True) if x.requires_grad else None
        gw = np.einsum("ncdhw,nodihjwk->coijk", xv, blocks, optimize=True) if weight.requires_grad else None
        gb = None
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=_SPATIAL_AXES, dtype=np.float64).astype(g.dtype)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return DiffGrid.from_op(out, parents, _backward, "transposed_conv3d")


# -- pooling, normalization, dropout --


def maxpool3d(x: DiffGrid, kernel: int = 2, stride: int = 2) -> DiffGrid:
    """2³ max pooling; ties route the gradient to the first maximum in row-major order."""
    _require_5d(x, "maxpool3d input")
    _require(kernel == 2 and stride == 2, f"maxpool3d supports kernel 2 stride 2 only, got {kernel}/{stride}")
    n, c, d, h, w = x.shape
    for axis, extent in zip("DHW", (d, h, w)):
        _require(extent % 2 == 0, f"maxpool3d needs even spatial extents, axis {axis} has {extent}")
    d2, h2, w2 = d // 2, h // 2, w // 2

    blocks = x.value.reshape(n, c, d2, 2, h2, 2, w2, 2).transpose(0, 1, 2, 4, 6, 3, 5, 7).reshape(n, c, d2, h2, w2, 8)
    winner = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, winner, axis=-1)[..., 0]

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        routed = np.zeros((n, c, d2, h2, w2, 8), dtype=g.dtype)
        np.put_along_axis(routed, winner, g[..., None], axis=-1)
        gx = routed.reshape(n, c, d2, h2, w2, 2, 2, 2).transpose(0, 1, 2, 5, 3, 6, 4, 7).reshape(n, c, d, h, w)
        return (gx,)

    return DiffGrid.from_op(out, (x,), _backward, "maxpool3d")


@dataclass
class BatchNormState:
    """Running statistics owned by one batch-norm layer."""

    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, channels: int) -> BatchNormState:
        return cls(
            running_mean=np.zeros(channels, dtype=np.float32),
            running_var=np.ones(channels, dtype=np.float32),
        )

    def copy(self) -> BatchNormState:
        return BatchNormState(self.running_mean.copy(), self.running_var.copy())


def batchnorm3d(
    x: DiffGrid,
    gamma: DiffGrid,
    beta: DiffGrid,
    state: BatchNormState,
    mode: Mode,
    *,
    eps: float = BN_EPSILON,
    momentum: float = BN_MOMENTUM,
) -> DiffGrid:
    """Per-channel normalization over N, D, H, W.

    Train mode normalizes with biased batch statistics and folds them into the
    running statistics (unbiased variance when more than one value per channel).
    Eval mode uses the running statistics.
    """
    _require_5d(x, "batchnorm3d input")
    c = x.shape[1]
    _require(gamma.shape == (c,) and beta.shape == (c,), f"batchnorm3d affine parameters must have shape ({c},)")
    _require(state.running_mean.shape == (c,), f"batchnorm3d running stats must have shape ({c},)")
    xv = x.value
    dtype = xv.dtype
    gv, bv = gamma.value, beta.value

    if not _training(mode):
        inv_std = 1.0 / np.sqrt(state.running_var.astype(np.float64) + eps)
        centered = xv - _channel_view(state.running_mean.astype(dtype))
        xhat = (centered * _channel_view(inv_std)).astype(dtype)
        out = (xhat * _channel_view(gv) + _channel_view(bv)).astype(dtype)
        scale = _channel_view((gv * inv_std).astype(dtype))

        def _eval_backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
            dgamma = (g * xhat).sum(axis=_SPATIAL_AXES, dtype=np.float64).astype(dtype)
            dbeta = g.sum(axis=_SPATIAL_AXES, dtype=np.float64).astype(dtype)
            return g * scale, dgamma, dbeta

        return DiffGrid.from_op(out, (x, gamma, beta), _eval_backward, "batchnorm3d")

    count = xv.size // c
    mean = xv.mean(axis=_SPATIAL_AXES, dtype=np.float64)
    var = xv.var(axis=_SPATIAL_AXES, dtype=np.float64)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((xv - _channel_view(mean)) * _channel_view(inv_std)).astype(dtype)
    out = (xhat * _channel_view(gv) + _channel_view(bv)).astype(dtype)

    unbiased = var * count / (count - 1) if count > 1 else var
    state.running_mean = ((1.0 - momentum) * state.running_mean + momentum * mean).astype(np.float32)
    state.running_var = ((1.0 - momentum) * state.running_var + momentum * unbiased).astype(np.float32)

    def _train_backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        dbeta = g.sum(axis=_SPATIAL_AXES, dtype=np.float64)
        dgamma = (g * xhat).sum(axis=_SPATIAL_AXES, dtype=np.float64)
        gx = _channel_view(gv * inv_std) * (g - _channel_view(dbeta / count) - xhat * _channel_view(dgamma / count))
        return gx.astype(dtype), dgamma.astype(dtype), dbeta.astype(dtype)

    return DiffGrid.from_op(out, (x, gamma, beta), _train_backward, "batchnorm3d")


def spatial_dropout3d(x: DiffGrid, rate: float, rng: RngState | None, mode: Mode) -> DiffGrid:
    """Zero whole channels with probability ``rate`` and rescale the survivors."""
    _require(0.0 <= rate < 1.0, f"dropout rate must lie in [0, 1), got {rate}")
    _require(x.ndim >= 2, f"spatial dropout needs an N×C×... grid, got shape {x.shape}")
    if not _training(mode) or rate == 0.0:
        return x
    _require(rng is not None, "train-mode dropout needs an RngState")
    n, c = x.shape[:2]
    keep = rng.uniform((n, c)) >= rate
    mask = (keep / (1.0 - rate)).astype(x.dtype).reshape((n, c) + (1,) * (x.ndim - 2))
    return DiffGrid.from_op(x.value * mask, (x,), lambda g: (g * mask,), "spatial_dropout3d")


def constant(values: np.ndarray) -> DiffGrid:
    """Wrap input data that never needs a gradient."""
    return DiffGrid(np.asarray(values, dtype=default_dtype()))
