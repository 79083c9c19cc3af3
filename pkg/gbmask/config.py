"""User configuration: built-in defaults merged with ``$XDG_CONFIG_HOME/gbmask/config.json``.

The merged dict is validated section by section, so a typo in the user file
fails once at load time instead of deep inside a training run.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ContractViolation

APP_NAME = "gbmask"

DEFAULT_CONFIG: dict[str, Any] = {
    "unet": {
        "base_channels": 32,
        "depth": 4,
        "dropout_rate": 0.2,
        "hidden_activation": "sigmoid",  # or "rectifier"
    },
    "training": {
        "lr": 1e-4,
        "batch_size": 1,
        "max_epochs": 100,
        "loss_eps": 1e-6,
        "seed": 0,
    },
    "preprocess": {
        "target_spacing": 1.5,  # mm, isotropic
        "size": 128,  # voxels per axis after crop/pad
        "hu_window": [-200.0, 200.0],
        "threshold_hu": -300.0,
        "closing_radius": 2,  # voxels
        "dilation_radius": 2,  # voxels, mask_from_labels
        "tau": 0.5,  # probability threshold at evaluation
    },
    "runtime": {
        "max_workers": 1,
    },
    "paths": {
        # None: XDG data home
        "data_dir": None,
    },
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class UNetSection(_Section):
    base_channels: int = Field(ge=1)
    depth: int = Field(ge=1)
    dropout_rate: float = Field(ge=0, lt=1)
    hidden_activation: Literal["sigmoid", "rectifier"]


class TrainingSection(_Section):
    lr: float = Field(ge=0)
    batch_size: int = Field(ge=1)
    max_epochs: int = Field(ge=1)
    loss_eps: float = Field(ge=0)
    seed: int = Field(ge=0)


class PreprocessSection(_Section):
    target_spacing: float = Field(gt=0)
    size: int = Field(ge=1)
    hu_window: list[float]
    threshold_hu: float
    closing_radius: int = Field(ge=0)
    dilation_radius: int = Field(ge=0)
    tau: float = Field(gt=0, lt=1)

    @field_validator("hu_window")
    @classmethod
    def _ordered_pair(cls, value: list[float]) -> list[float]:
        if len(value) != 2 or value[0] >= value[1]:
            raise ValueError("needs [lo, hi] with lo < hi")
        return value


class RuntimeSection(_Section):
    max_workers: int = Field(ge=1)


class PathsSection(_Section):
    data_dir: str | None


class Settings(_Section):
    unet: UNetSection
    training: TrainingSection
    preprocess: PreprocessSection
    runtime: RuntimeSection
    paths: PathsSection


def validate_config(config: dict[str, Any], source: str | Path = "configuration") -> dict[str, Any]:
    """Check every section against its schema; the dict itself is returned unchanged."""
    try:
        Settings.model_validate(config)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ContractViolation(f"{source}: {where}: {first['msg']}") from exc
    return config


def get_xdg_config_home() -> Path:
    return Path(os.environ.get("XDG_CONFIG_HOME", os.path.expanduser("~/.config")))


def get_xdg_data_home() -> Path:
    return Path(os.environ.get("XDG_DATA_HOME", os.path.expanduser("~/.local/share")))


def get_config_path() -> Path:
    return get_xdg_config_home() / APP_NAME / "config.json"


_config_cache: tuple[float, dict[str, Any]] | None = None


def load_config() -> dict[str, Any]:
    """Defaults merged with the user file, cached on the file's mtime.

    Returns a deep copy; callers may mutate it freely.
    """
    global _config_cache

    path = get_config_path()
    try:
        mtime = path.stat().st_mtime
    except OSError:
        mtime = 0.0

    if _config_cache is None or _config_cache[0] != mtime:
        merged = copy.deepcopy(DEFAULT_CONFIG)
        if mtime > 0:
            try:
                user = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ContractViolation(f"{path}: cannot read configuration: {exc}") from exc
            merged = deep_merge(merged, user)
        _config_cache = (mtime, validate_config(merged, path))

    return copy.deepcopy(_config_cache[1])


def reset_config_cache() -> None:
    global _config_cache
    _config_cache = None


def save_config(config: dict[str, Any]) -> None:
    path = get_config_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


def deep_merge(base: dict, override: dict) -> dict:
    result = base.copy()
    for key, value in override.items():
        if isinstance(result.get(key), dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value
    return result


def set_config_value(config: dict[str, Any], dotted_key: str, raw_value: str) -> dict[str, Any]:
    """Set ``section.key`` from a CLI string, parsed as JSON when possible.

    Only keys present in ``DEFAULT_CONFIG`` can be set.  Raises ``KeyError``
    for unknown keys and ``ContractViolation`` for values the schema rejects.
    """
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value

    *parents, leaf = dotted_key.split(".")
    node, known = config, DEFAULT_CONFIG
    for part in parents:
        known = known.get(part) if isinstance(known, dict) else None
        if not isinstance(known, dict):
            raise KeyError(f"{part} is not a section")
        node = node.setdefault(part, {})
    if leaf not in known:
        raise KeyError(f"unknown setting {dotted_key!r}")
    if isinstance(known[leaf], dict):
        raise KeyError(f"{dotted_key} is a section, not a value")
    node[leaf] = value
    validate_config(config, dotted_key)
    return config


def get_data_dir() -> Path:
    """``GBMASK_DATA_DIR``, then ``paths.data_dir``, then the XDG data home."""
    env_dir = os.environ.get("GBMASK_DATA_DIR")
    if env_dir:
        return Path(env_dir)

    config_dir = load_config()["paths"]["data_dir"]
    if config_dir:
        return Path(config_dir)

    return get_xdg_data_home() / APP_NAME


def get_log_dir() -> Path:
    env_dir = os.environ.get("GBMASK_LOG_DIR")
    if env_dir:
        return Path(env_dir)
    return get_data_dir() / "logs"


def normalized_worker_count(value: Any, fallback: int = 1) -> int:
    """Return a positive worker count, falling back on invalid inputs."""
    try:
        workers = int(value)
    except (TypeError, ValueError):
        workers = fallback
    return workers if workers > 0 else fallback
