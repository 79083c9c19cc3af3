"""Autodiff gradients against central finite differences at float64."""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np
import pytest

from gbmask.diffgrid import (
    BatchNormState,
    DiffGrid,
    RngState,
    backward,
    batchnorm3d,
    concat_channels,
    constant,
    conv3d,
    maxpool3d,
    mul,
    precision,
    relu,
    sigmoid,
    slice_channels,
    spatial_dropout3d,
    sum_all,
    transposed_conv3d,
)
from gbmask.training import dice_loss
from gbmask.unet3d import UNetConfig, build, forward

H = 1e-3
RTOL = 1e-3
ATOL = 1e-6
SAMPLES = 20


def check_gradients(
    fn: Callable[..., DiffGrid],
    leaves: Sequence[DiffGrid],
    *,
    seed: int = 0,
    samples: int = SAMPLES,
) -> None:
    """Compare backward() with central differences on sampled coordinates of every leaf."""
    root = fn(*leaves)
    backward(root)
    analytic = [leaf.grad.copy() for leaf in leaves]
    picker = np.random.default_rng(seed)
    for leaf, grad in zip(leaves, analytic):
        flat = leaf.value.reshape(-1)
        for index in picker.choice(flat.size, size=min(samples, flat.size), replace=False):
            saved = flat[index]
            flat[index] = saved + H
            up = fn(*leaves).item()
            flat[index] = saved - H
            down = fn(*leaves).item()
            flat[index] = saved
            numeric = (up - down) / (2 * H)
            got = grad.reshape(-1)[index]
            assert abs(got - numeric) <= ATOL + RTOL * max(abs(got), abs(numeric)), (
                f"index {index}: autodiff {got!r} vs finite difference {numeric!r}"
            )


def projected(op: Callable[..., DiffGrid], weights: np.ndarray) -> Callable[..., DiffGrid]:
    """Reduce an op's output to a scalar through a fixed random projection."""

    def fn(*leaves: DiffGrid) -> DiffGrid:
        return sum_all(mul(op(*leaves), constant(weights)))

    return fn


def leaf(values: np.ndarray) -> DiffGrid:
    return DiffGrid(values, requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(99)


def test_conv3d_gradients(rng):
    with precision("float64"):
        leaves = [
            leaf(rng.uniform(-1, 1, (2, 2, 4, 3, 4))),
            leaf(rng.uniform(-1, 1, (3, 2, 3, 3, 3))),
            leaf(rng.uniform(-1, 1, 3)),
        ]
        check_gradients(projected(conv3d, rng.uniform(-1, 1, (2, 3, 4, 3, 4))), leaves)


@pytest.mark.parametrize(("kernel", "padding"), [(3, 0), (3, 2), (1, None)])
def test_conv3d_gradients_for_other_paddings_and_kernels(rng, kernel, padding):
    with precision("float64"):
        x = rng.uniform(-1, 1, (1, 2, 4, 5, 3))
        weight = rng.uniform(-1, 1, (2, 2, kernel, kernel, kernel))
        out_shape = conv3d(DiffGrid(x), DiffGrid(weight), padding=padding).shape
        leaves = [leaf(x), leaf(weight)]

        def op(a: DiffGrid, w: DiffGrid) -> DiffGrid:
            return conv3d(a, w, padding=padding)

        check_gradients(projected(op, rng.uniform(-1, 1, out_shape)), leaves)


def test_transposed_conv3d_gradients(rng):
    with precision("float64"):
        leaves = [
            leaf(rng.uniform(-1, 1, (1, 2, 2, 3, 2))),
            leaf(rng.uniform(-1, 1, (2, 3, 2, 2, 2))),
            leaf(rng.uniform(-1, 1, 3)),
        ]
        check_gradients(projected(transposed_conv3d, rng.uniform(-1, 1, (1, 3, 4, 6, 4))), leaves)


def test_maxpool3d_gradients(rng):
    # distinct, well-separated values keep the argmax stable under ±h
    values = rng.permutation(128).reshape(1, 2, 4, 4, 4) * 0.01
    with precision("float64"):
        check_gradients(projected(maxpool3d, rng.uniform(-1, 1, (1, 2, 2, 2, 2))), [leaf(values)])


@pytest.mark.parametrize("mode", ["train", "eval"])
def test_batchnorm3d_gradients(rng, mode):
    state = BatchNormState(rng.uniform(-0.5, 0.5, 3).astype(np.float32), rng.uniform(0.5, 2, 3).astype(np.float32))
    with precision("float64"):
        leaves = [
            leaf(rng.normal(1.0, 2.0, (2, 3, 2, 2, 2))),
            leaf(rng.uniform(0.5, 1.5, 3)),
            leaf(rng.uniform(-0.5, 0.5, 3)),
        ]

        def op(x, gamma, beta):
            return batchnorm3d(x, gamma, beta, state.copy(), mode)

        check_gradients(projected(op, rng.uniform(-1, 1, (2, 3, 2, 2, 2))), leaves)


def test_sigmoid_and_relu_gradients(rng):
    # keep relu inputs away from the kink
    values = rng.uniform(0.1, 1.0, (1, 1, 3, 3, 3)) * rng.choice([-1.0, 1.0], (1, 1, 3, 3, 3))
    weights = rng.uniform(-1, 1, (1, 1, 3, 3, 3))
    with precision("float64"):
        check_gradients(projected(sigmoid, weights), [leaf(values)])
        check_gradients(projected(relu, weights), [leaf(values)])


def test_dropout_gradients_reuse_the_same_channel_mask(rng):
    weights = rng.uniform(-1, 1, (2, 4, 2, 2, 2))
    with precision("float64"):

        def op(x):
            return spatial_dropout3d(x, 0.5, RngState(21), "train")

        check_gradients(projected(op, weights), [leaf(rng.uniform(-1, 1, (2, 4, 2, 2, 2)))])


def test_concat_and_slice_gradients(rng):
    weights = rng.uniform(-1, 1, (1, 2, 2, 2, 2))
    with precision("float64"):

        def op(a, b):
            return slice_channels(concat_channels(a, b), 1, 3)

        check_gradients(projected(op, weights), [leaf(rng.uniform(size=(1, 2, 2, 2, 2))), leaf(rng.uniform(size=(1, 1, 2, 2, 2)))])


def test_dice_loss_gradients(rng):
    target = (rng.uniform(size=(2, 3, 3, 3, 3)) > 0.6).astype(np.float64)
    with precision("float64"):
        pred = leaf(rng.uniform(0.05, 0.95, (2, 3, 3, 3, 3)))
        check_gradients(lambda p: dice_loss(p, target), [pred])


def test_two_level_unet_end_to_end_gradients(rng):
    config = UNetConfig(in_channels=1, out_channels=2, base_channels=2, depth=2, dropout_rate=0.2)
    target = (rng.uniform(size=(1, 2, 8, 8, 8)) > 0.5).astype(np.float64)
    with precision("float64"):
        model = build(config, RngState(5))
        x = constant(rng.uniform(0, 1, (1, 1, 8, 8, 8)))
        names = list(model.parameters)
        leaves = [model.parameters[name] for name in names]

        def loss(*_leaves: DiffGrid) -> DiffGrid:
            # a fresh dropout stream per evaluation keeps the channel mask fixed
            return dice_loss(forward(model, x, "train", RngState(8)), target)

        check_gradients(loss, leaves, samples=1)
