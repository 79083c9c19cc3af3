"""MCKP checkpoints: model parameters, Adam moments and batch-norm statistics.

All integers little-endian.  Layout::

    magic "MCKP" · version u16 · config digest (32 bytes, SHA-256)
    meta length u32 · meta JSON (unet config, scenario)
    epoch u32 · parameter count u32
    per parameter: name length u16 · name · ndim u8 · dims u32×ndim · f32 payload
    adam flag u8 · [t u32 · m payloads · v payloads, in parameter order]
    batch-norm layer count u32
    per layer: name length u16 · name · channels u32 · mean f32 · var f32
"""

from __future__ import annotations

import io
import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..diffgrid import BatchNormState, DiffGrid
from ..errors import (
    CheckpointFormatError,
    CheckpointVersionError,
    NameSetMismatchError,
)
from ..pipeline.mvol import atomic_write_bytes
from ..unet3d import UNetConfig, UNetModel, batchnorm_layers, parameter_shapes
from .optim import AdamState
from .scenario import Scenario

log = logging.getLogger(__name__)

MAGIC = b"MCKP"
VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    model: UNetModel
    scenario: Scenario
    epoch: int
    adam: AdamState | None = None


class _Writer:
    def __init__(self) -> None:
        self.buffer = io.BytesIO()

    def pack(self, fmt: str, *values) -> None:
        self.buffer.write(struct.pack("<" + fmt, *values))

    def name(self, name: str) -> None:
        raw = name.encode("utf-8")
        self.pack("H", len(raw))
        self.buffer.write(raw)

    def floats(self, values: np.ndarray) -> None:
        self.buffer.write(np.ascontiguousarray(values, dtype=_F32).tobytes())


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointFormatError(f"checkpoint truncated at byte {self.offset} (needed {size} more)")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        layout = struct.Struct("<" + fmt)
        return layout.unpack(self.take(layout.size))

    def name(self) -> str:
        (length,) = self.unpack("H")
        return self.take(length).decode("utf-8")

    def floats(self, shape: tuple[int, ...]) -> np.ndarray:
        count = math.prod(shape)
        return np.frombuffer(self.take(count * _F32.itemsize), dtype=_F32).reshape(shape).astype(np.float32)


def encode_checkpoint(model: UNetModel, scenario: Scenario, epoch: int, adam: AdamState | None = None) -> bytes:
    config = model.config
    names = list(parameter_shapes(config))
    meta = json.dumps({"unet": config.to_dict(), "scenario": scenario.value}, sort_keys=True).encode("utf-8")

    w = _Writer()
    w.buffer.write(MAGIC)
    w.pack("H", VERSION)
    w.buffer.write(config.digest())
    w.pack("I", len(meta))
    w.buffer.write(meta)
    w.pack("II", epoch, len(names))
    for name in names:
        value = model.parameters[name].value
        w.name(name)
        w.pack("B", value.ndim)
        w.pack(f"{value.ndim}I", *value.shape)
        w.floats(value)

    w.pack("B", 1 if adam is not None else 0)
    if adam is not None:
        w.pack("I", adam.t)
        for moments in (adam.m, adam.v):
            for name in names:
                w.floats(moments.get(name, np.zeros(model.parameters[name].shape)))

    w.pack("I", len(model.batchnorm))
    for name, state in model.batchnorm.items():
        w.name(name)
        w.pack("I", state.running_mean.size)
        w.floats(state.running_mean)
        w.floats(state.running_var)
    return w.buffer.getvalue()


def decode_checkpoint(data: bytes, expected: UNetConfig | None = None) -> Checkpoint:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("not a checkpoint (bad magic)")
    (version,) = r.unpack("H")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version} is not supported (expected {VERSION})")
    digest = r.take(32)
    (meta_length,) = r.unpack("I")
    try:
        meta = json.loads(r.take(meta_length))
        config = UNetConfig.from_dict(meta["unet"])
        scenario = Scenario.parse(meta["scenario"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"unreadable checkpoint metadata: {exc}") from exc
    if digest != config.digest():
        raise CheckpointFormatError("config digest does not match the embedded configuration")
    if expected is not None and expected.digest() != digest:
        raise NameSetMismatchError(f"checkpoint was written for {config}, not {expected}")

    shapes = parameter_shapes(config)
    epoch, count = r.unpack("II")
    if count != len(shapes):
        raise NameSetMismatchError(f"checkpoint lists {count} parameters; the configuration defines {len(shapes)}")

    parameters: dict[str, DiffGrid] = {}
    for name, shape in shapes.items():
        stored = r.name()
        (ndim,) = r.unpack("B")
        dims = r.unpack(f"{ndim}I")
        if stored != name or tuple(dims) != shape:
            raise NameSetMismatchError(f"record {stored}{tuple(dims)} does not match expected {name}{shape}")
        parameters[name] = _leaf(r.floats(shape), name)

    adam = None
    (has_adam,) = r.unpack("B")
    if has_adam:
        (t,) = r.unpack("I")
        m = {name: r.floats(shape) for name, shape in shapes.items()}
        v = {name: r.floats(shape) for name, shape in shapes.items()}
        adam = AdamState(m=m, v=v, t=t)

    layers = batchnorm_layers(config)
    (bn_count,) = r.unpack("I")
    if bn_count != len(layers):
        raise NameSetMismatchError(f"checkpoint has {bn_count} batch-norm layers; the configuration defines {len(layers)}")
    batchnorm: dict[str, BatchNormState] = {}
    for _ in range(bn_count):
        name = r.name()
        (channels,) = r.unpack("I")
        if layers.get(name) != channels:
            raise NameSetMismatchError(f"unexpected batch-norm layer {name} with {channels} channels")
        batchnorm[name] = BatchNormState(r.floats((channels,)), r.floats((channels,)))
    if r.offset != len(data):
        raise CheckpointFormatError(f"{len(data) - r.offset} trailing bytes after checkpoint payload")

    model = UNetModel(config=config, parameters=parameters, batchnorm=batchnorm)
    return Checkpoint(model=model, scenario=scenario, epoch=epoch, adam=adam)


def _leaf(values: np.ndarray, name: str) -> DiffGrid:
    return DiffGrid(values, requires_grad=True, name=name)


def save_checkpoint(
    path: str | Path,
    model: UNetModel,
    scenario: Scenario,
    epoch: int,
    adam: AdamState | None = None,
) -> Path:
    path = atomic_write_bytes(path, encode_checkpoint(model, scenario, epoch, adam))
    log.debug("checkpoint_saved path=%s epoch=%d scenario=%s", path, epoch, scenario.value)
    return path


def load_checkpoint(path: str | Path, expected: UNetConfig | None = None) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    checkpoint = decode_checkpoint(data, expected)
    log.debug("checkpoint_loaded path=%s epoch=%d", path, checkpoint.epoch)
    return checkpoint
