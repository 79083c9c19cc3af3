"""Shared Rich console and small formatting helpers for command output."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

from rich.console import Console

if TYPE_CHECKING:
    from pathlib import Path

console = Console()

_STATUS_ICONS = {
    "done": "[green]✓[/green]",
    "failed": "[red]✗[/red]",
}


def status_icon(status: str) -> str:
    """Colored marker for a sweep cell status."""
    return _STATUS_ICONS.get(status, "?")


def mean_std(mean: float | None, std: float | None, digits: int = 3) -> str:
    if mean is None or math.isnan(mean):
        return "-"
    return f"{mean:.{digits}f} ({std or 0.0:.{digits}f})"


def print_outputs(*paths: Path) -> None:
    """Print written files one per line, unstyled, so scripts can pick them up."""
    for path in paths:
        console.print(str(path), highlight=False, soft_wrap=True)
