"""File logging for CLI runs.

Each invocation appends ``command_start`` / ``command_exit`` lines to a daily
rotating file under ``GBMASK_LOG_DIR`` or ``<data_dir>/logs``; library
loggers (``stage_start``, ``train_epoch``, ``sweep_cell_failed`` ...) share the
handler.  The exit line is followed by the run's telemetry counters.
"""

from __future__ import annotations

import logging
import os
import sys
import time
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any

import rich_click as click

from .. import telemetry
from ..config import get_log_dir

_HANDLER_ATTR = "_gbmask_cli_handler"
LOG_FORMAT = "%(asctime)s %(levelname)s [%(process)d:%(threadName)s] %(name)s: %(message)s"


def _log_dir() -> Path:
    try:
        return get_log_dir().expanduser()
    except Exception:
        return Path(os.environ.get("XDG_DATA_HOME", "~/.local/share")).expanduser() / "gbmask" / "logs"


def _log_level() -> int:
    name = os.environ.get("GBMASK_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def _cli_handlers() -> list[logging.Handler]:
    return [h for h in logging.getLogger().handlers if getattr(h, _HANDLER_ATTR, False)]


def _remove_cli_file_handlers() -> None:
    for handler in _cli_handlers():
        logging.getLogger().removeHandler(handler)
        handler.close()


def _skip_default_logging_under_pytest() -> bool:
    return bool(os.environ.get("PYTEST_CURRENT_TEST")) and not os.environ.get("GBMASK_LOG_DIR")


def configure_cli_logging() -> Path:
    """Attach (or reuse) today's rotating file handler on the root logger."""
    log_dir = _log_dir()
    log_dir.mkdir(parents=True, exist_ok=True)
    log_path = log_dir / f"cli-{datetime.now().strftime('%Y-%m-%d')}.log"

    root = logging.getLogger()
    level = _log_level()
    root.setLevel(level)
    for handler in _cli_handlers():
        if Path(getattr(handler, "baseFilename", "")) == log_path:
            handler.setLevel(level)
            return log_path
    _remove_cli_file_handlers()

    handler = RotatingFileHandler(log_path, maxBytes=10_000_000, backupCount=7)
    setattr(handler, _HANDLER_ATTR, True)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt="%Y-%m-%dT%H:%M:%S%z"))
    root.addHandler(handler)
    logging.captureWarnings(True)
    return log_path


def _exit_code(exc: SystemExit) -> int:
    if isinstance(exc.code, int):
        return exc.code
    return 1 if exc.code else 0


def _counters_line() -> str:
    counters = telemetry.get_all_metrics()["counters"]
    return " ".join(f"{name}={value:g}" for name, value in sorted(counters.items()))


class LoggedGroup(click.RichGroup):
    """Rich click group that logs command lifecycle and maps usage errors to exit code 1."""

    def make_context(self, *args: Any, **kwargs: Any) -> click.Context:
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as exc:
            exc.exit_code = 1
            raise

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except click.UsageError as exc:
            exc.exit_code = 1
            raise

    def main(self, *args: Any, **kwargs: Any) -> Any:
        argv = kwargs.get("args")
        command = " ".join(sys.argv[1:] if argv is None else list(argv))

        if _skip_default_logging_under_pytest():
            _remove_cli_file_handlers()
            return super().main(*args, **kwargs)

        log_path = configure_cli_logging()
        log = logging.getLogger("gbmask.cli")
        started = time.monotonic()
        log.info("command_start argv=%r cwd=%s log=%s", command, os.getcwd(), log_path)

        def finish(code: int) -> None:
            log.info("command_exit code=%s elapsed=%.3fs argv=%r", code, time.monotonic() - started, command)
            counters = _counters_line()
            if counters:
                log.info("command_counters %s", counters)

        try:
            result = super().main(*args, **kwargs)
        except SystemExit as exc:
            finish(_exit_code(exc))
            raise
        except BaseException:
            log.exception("command_error elapsed=%.3fs argv=%r", time.monotonic() - started, command)
            raise
        finish(0)
        return result
