"""MVOL: the little-endian raw volume container.

Layout: magic ``MVOL`` · version u16 · dtype code u8 (0 f32, 1 u8) · kind u8
(0 intensity, 1 label, 2 binary) · dims 3×u32 · spacing 3×f32 · origin 3×f32,
then D·H·W voxels row-major with x fastest.  The format carries no intensity
units; callers say whether an intensity payload is raw HU or normalized.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..errors import (
    BadMagicError,
    MvolFormatError,
    TruncatedPayloadError,
    UnknownDtypeError,
    UnsupportedVersionError,
)
from .volume import AnyGrid, BinaryMask, LabelMap, Units, Volume

MAGIC = b"MVOL"
VERSION = 1
HEADER = struct.Struct("<4sHBB3I3f3f")

DTYPES: dict[int, np.dtype] = {0: np.dtype("<f4"), 1: np.dtype("u1")}
KINDS: dict[int, type[AnyGrid]] = {0: Volume, 1: LabelMap, 2: BinaryMask}
_KIND_CODES = {cls: code for code, cls in KINDS.items()}
_KIND_DTYPE = {0: 0, 1: 1, 2: 1}


def encode_mvol(grid: AnyGrid) -> bytes:
    kind = _KIND_CODES[type(grid)]
    dtype_code = _KIND_DTYPE[kind]
    header = HEADER.pack(MAGIC, VERSION, dtype_code, kind, *grid.dims, *grid.spacing, *grid.origin)
    return header + grid.voxels.astype(DTYPES[dtype_code], copy=False).tobytes(order="C")


def decode_mvol(data: bytes, *, units: Units = "hu") -> AnyGrid:
    if len(data) < HEADER.size:
        if data[:4] != MAGIC[: len(data[:4])]:
            raise BadMagicError(f"bad magic {data[:4]!r}")
        raise TruncatedPayloadError(f"header needs {HEADER.size} bytes, got {len(data)}")
    magic, version, dtype_code, kind, *rest = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"MVOL version {version} is not supported (expected {VERSION})")
    if dtype_code not in DTYPES:
        raise UnknownDtypeError(f"unknown dtype code {dtype_code}")
    if kind not in KINDS:
        raise MvolFormatError(f"unknown kind code {kind}")
    if _KIND_DTYPE[kind] != dtype_code:
        raise MvolFormatError(f"kind {kind} cannot be stored with dtype code {dtype_code}")

    dims = tuple(rest[:3])
    spacing = tuple(rest[3:6])
    origin = tuple(rest[6:9])
    dtype = DTYPES[dtype_code]
    expected = int(np.prod(dims)) * dtype.itemsize
    payload = memoryview(data)[HEADER.size :]
    if len(payload) != expected:
        raise TruncatedPayloadError(f"dims {dims} need {expected} payload bytes, found {len(payload)}")

    voxels = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    cls = KINDS[kind]
    if cls is Volume:
        return Volume(voxels, spacing, origin, units=units)
    if cls is BinaryMask and voxels.size and voxels.max() > 1:
        raise MvolFormatError("binary payload holds values other than 0 and 1")
    return cls(voxels, spacing, origin)


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    """Write to a sibling temp file and rename; the file appears complete or not at all."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_mvol(path: str | Path, grid: AnyGrid) -> Path:
    return atomic_write_bytes(path, encode_mvol(grid))


def read_mvol(path: str | Path, *, units: Units = "hu") -> AnyGrid:
    path = Path(path)
    try:
        return decode_mvol(path.read_bytes(), units=units)
    except MvolFormatError as exc:
        raise type(exc)(f"{path}: {exc}") from exc
