"""Shared CLI utilities: error-to-exit-code mapping and option defaults."""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager
from typing import Any

import rich_click as click
from pydantic import ValidationError

from ..config import load_config
from ..errors import ContractViolation, DataError, EmptyMaskError, ExperimentConfigError, NonFiniteLossError

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageFailure(click.ClickException):
    exit_code = EXIT_USAGE


class DataFailure(click.ClickException):
    exit_code = EXIT_DATA


class NumericFailure(click.ClickException):
    exit_code = EXIT_NUMERIC


@contextmanager
def cli_errors(context: str | None = None) -> Iterator[None]:
    """Translate library errors into click exceptions carrying the documented exit codes."""
    prefix = f"{context}: " if context else ""
    try:
        yield
    except NonFiniteLossError as exc:
        raise NumericFailure(f"{prefix}{exc}") from exc
    except (DataError, EmptyMaskError, OSError) as exc:
        raise DataFailure(f"{prefix}{exc}") from exc
    except (ContractViolation, ExperimentConfigError, ValidationError) as exc:
        raise UsageFailure(f"{prefix}{exc}") from exc


def config_default(section: str, key: str) -> Any:
    return load_config()[section][key]
