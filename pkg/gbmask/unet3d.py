"""3D U-Net assembled from diffgrid ops.

Encoder stage k has ``base·2^k`` channels (conv-bn-act twice, spatial dropout,
2³ max-pool), a bottleneck doubles once more, and each decoder stage up-samples
with a 2³ transposed convolution, concatenates the matching encoder features
and runs another conv-bn-act pair.  A 1×1×1 convolution maps to one sigmoid
channel per structure.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Iterator
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Literal

import numpy as np

from .diffgrid import (
    BatchNormState,
    DiffGrid,
    Mode,
    RngState,
    batchnorm3d,
    concat_channels,
    conv3d,
    maxpool3d,
    relu,
    sigmoid,
    spatial_dropout3d,
    transposed_conv3d,
)
from .errors import ContractViolation

Activation = Literal["sigmoid", "rectifier"]
ACTIVATIONS: tuple[str, ...] = ("sigmoid", "rectifier")


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 1
    out_channels: int = 3
    base_channels: int = 32
    depth: int = 4
    dropout_rate: float = 0.2
    hidden_activation: Activation = "sigmoid"

    def __post_init__(self) -> None:
        if self.in_channels not in (1, 2):
            raise ContractViolation(f"in_channels must be 1 or 2, got {self.in_channels}")
        if self.out_channels < 1:
            raise ContractViolation(f"out_channels must be >= 1, got {self.out_channels}")
        if self.base_channels < 1:
            raise ContractViolation(f"base_channels must be >= 1, got {self.base_channels}")
        if self.depth < 1:
            raise ContractViolation(f"depth must be >= 1, got {self.depth}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractViolation(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.hidden_activation not in ACTIVATIONS:
            raise ContractViolation(f"hidden_activation must be one of {ACTIVATIONS}, got {self.hidden_activation!r}")

    def channels(self, stage: int) -> int:
        """Feature channels at encoder stage ``stage`` (``depth`` is the bottleneck)."""
        return self.base_channels * 2**stage

    @property
    def divisor(self) -> int:
        return 2**self.depth

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> UNetConfig:
        return cls(**data)

    def digest(self) -> bytes:
        """SHA-256 over the canonical JSON form; identifies the architecture."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()


def _block_shapes(prefix: str, cin: int, cout: int) -> Iterator[tuple[str, tuple[int, ...]]]:
    yield f"{prefix}.conv1.weight", (cout, cin, 3, 3, 3)
    yield f"{prefix}.bn1.gamma", (cout,)
    yield f"{prefix}.bn1.beta", (cout,)
    yield f"{prefix}.conv2.weight", (cout, cout, 3, 3, 3)
    yield f"{prefix}.bn2.gamma", (cout,)
    yield f"{prefix}.bn2.beta", (cout,)


def parameter_shapes(config: UNetConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter names in forward order with their shapes."""
    shapes: dict[str, tuple[int, ...]] = {}
    cin = config.in_channels
    for k in range(config.depth):
        shapes.update(_block_shapes(f"down.{k}", cin, config.channels(k)))
        cin = config.channels(k)
    shapes.update(_block_shapes("bottleneck", cin, config.channels(config.depth)))
    for i in range(config.depth):
        level = config.depth - 1 - i
        below, here = config.channels(level + 1), config.channels(level)
        shapes[f"up.{i}.upconv.weight"] = (below, here, 2, 2, 2)
        shapes[f"up.{i}.upconv.bias"] = (here,)
        shapes.update(_block_shapes(f"up.{i}", 2 * here, here))
    shapes["head.weight"] = (config.out_channels, config.channels(0), 1, 1, 1)
    shapes["head.bias"] = (config.out_channels,)
    return shapes


def batchnorm_layers(config: UNetConfig) -> dict[str, int]:
    """Batch-norm layer names mapped to their channel counts."""
    return {
        name.removesuffix(".gamma"): shape[0]
        for name, shape in parameter_shapes(config).items()
        if name.endswith(".gamma")
    }


def parameter_count(config: UNetConfig) -> int:
    return sum(math.prod(shape) for shape in parameter_shapes(config).values())


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if name.endswith("upconv.weight"):
        return shape[0] * math.prod(shape[2:])
    return math.prod(shape[1:])


@dataclass
class UNetModel:
    config: UNetConfig
    parameters: dict[str, DiffGrid]
    batchnorm: dict[str, BatchNormState] = field(default_factory=dict)

    def zero_grad(self) -> None:
        for param in self.parameters.values():
            param.zero_grad()

    def state_copy(self) -> tuple[dict[str, np.ndarray], dict[str, BatchNormState]]:
        return (
            {name: param.numpy() for name, param in self.parameters.items()},
            {name: state.copy() for name, state in self.batchnorm.items()},
        )

    def load_state(self, values: dict[str, np.ndarray], batchnorm: dict[str, BatchNormState]) -> None:
        for name, param in self.parameters.items():
            param.value = values[name].copy()
            param.zero_grad()
        self.batchnorm = {name: state.copy() for name, state in batchnorm.items()}

    def predict(self, x: DiffGrid) -> np.ndarray:
        """Eval-mode probabilities, N×S×D×H×W, computed without recording a tape."""
        frozen = replace(self, parameters={name: param.detach() for name, param in self.parameters.items()})
        return forward(frozen, x, "eval").numpy()


def build(config: UNetConfig, rng: RngState) -> UNetModel:
    """Initialize weights uniformly in ±1/sqrt(fan_in); biases and beta zero, gamma one."""
    parameters: dict[str, DiffGrid] = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".weight"):
            bound = 1.0 / math.sqrt(_fan_in(name, shape))
            values = rng.uniform(shape, -bound, bound)
        elif name.endswith(".gamma"):
            values = np.ones(shape)
        else:
            values = np.zeros(shape)
        parameters[name] = DiffGrid(values, requires_grad=True, name=name)
    batchnorm = {name: BatchNormState.fresh(channels) for name, channels in batchnorm_layers(config).items()}
    return UNetModel(config=config, parameters=parameters, batchnorm=batchnorm)


def _conv_bn_act(model: UNetModel, prefix: str, x: DiffGrid, mode: Mode) -> DiffGrid:
    p = model.parameters
    activation = sigmoid if model.config.hidden_activation == "sigmoid" else relu
    for index in (1, 2):
        x = conv3d(x, p[f"{prefix}.conv{index}.weight"])
        bn = f"{prefix}.bn{index}"
        x = batchnorm3d(x, p[f"{bn}.gamma"], p[f"{bn}.beta"], model.batchnorm[bn], mode)
        x = activation(x)
    return x


def forward(model: UNetModel, x: DiffGrid, mode: Mode, rng: RngState | None = None) -> DiffGrid:
    config = model.config
    if x.ndim != 5:
        raise ContractViolation(f"network input must be N×C×D×H×W, got shape {x.shape}")
    if x.shape[1] != config.in_channels:
        raise ContractViolation(f"network expects {config.in_channels} input channels, got {x.shape[1]}")
    for axis, extent in zip("DHW", x.shape[2:]):
        if extent % config.divisor:
            raise ContractViolation(
                f"spatial axis {axis} has extent {extent}, not divisible by 2^depth = {config.divisor}",
            )

    skips: list[DiffGrid] = []
    for k in range(config.depth):
        x = _conv_bn_act(model, f"down.{k}", x, mode)
        x = spatial_dropout3d(x, config.dropout_rate, rng, mode)
        skips.append(x)
        x = maxpool3d(x)
    x = _conv_bn_act(model, "bottleneck", x, mode)

    p = model.parameters
    for i in range(config.depth):
        x = transposed_conv3d(x, p[f"up.{i}.upconv.weight"], p[f"up.{i}.upconv.bias"])
        x = concat_channels(skips.pop(), x)
        x = _conv_bn_act(model, f"up.{i}", x, mode)
    return sigmoid(conv3d(x, p["head.weight"], p["head.bias"]))
