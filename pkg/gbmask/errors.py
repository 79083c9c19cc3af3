"""Exception hierarchy shared by the engine, the pipeline and the CLI."""

from __future__ import annotations


class GbmaskError(Exception):
    """Base class for every error raised by gbmask."""


class ContractViolation(GbmaskError, ValueError):
    """A caller broke an operation's precondition (shape, range, configuration)."""


class EmptyMaskError(GbmaskError):
    """A mask that must contain voxels is empty."""


class DataError(GbmaskError):
    """Persistent data could not be read or does not match expectations."""


class MvolFormatError(DataError):
    """An MVOL file is malformed."""


class BadMagicError(MvolFormatError):
    pass


class TruncatedPayloadError(MvolFormatError):
    pass


class UnknownDtypeError(MvolFormatError):
    pass


class UnsupportedVersionError(MvolFormatError):
    pass


class CheckpointError(DataError):
    """A checkpoint file cannot be used."""


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class NameSetMismatchError(CheckpointError):
    """Checkpoint parameter records do not match the configured architecture."""


class ManifestError(DataError):
    pass


class ExperimentConfigError(GbmaskError, ValueError):
    """An experiment key=value file is invalid."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class NonFiniteLossError(GbmaskError, ArithmeticError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch: int, subject_id: str, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch} on subject {subject_id}")
        self.epoch = epoch
        self.subject_id = subject_id
        self.value = value
