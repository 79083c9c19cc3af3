"""Experiment files: one ``key = value`` per line.

``#`` starts a comment, blank lines are ignored and list values are
comma-separated.  Keys that are not given take their defaults from the user
configuration (``gbmask config``), so every run is fully specified by the file,
the configuration and the seeds.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .config import load_config
from .errors import ExperimentConfigError
from .pipeline import PreprocessSettings
from .training import Scenario, TrainConfig
from .unet3d import UNetConfig

LIST_KEYS = frozenset({"scenarios", "ladder", "seeds"})
DEFAULT_LADDER = [1, 2, 4, 8, 16]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # data
    preset: str = "brain"
    phantom_file: str | None = None
    manifest: str | None = None
    data_seed: int = Field(0, ge=0)
    n_train: int = Field(16, ge=0)
    n_val: int = Field(4, ge=1)
    n_test: int = Field(8, ge=0)
    # sweep matrix
    scenarios: tuple[Scenario, ...] = tuple(Scenario)
    ladder: tuple[int, ...] = tuple(DEFAULT_LADDER)
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs"
    # preprocessing
    target_spacing: float = Field(gt=0)
    size: int = Field(gt=0)
    # network
    base_channels: int = Field(ge=1)
    depth: int = Field(ge=1)
    dropout_rate: float = Field(ge=0.0, lt=1.0)
    hidden_activation: Literal["sigmoid", "rectifier"]
    # training
    lr: float = Field(ge=0.0)
    batch_size: int = Field(ge=1)
    max_epochs: int = Field(ge=1)
    loss_eps: float = Field(ge=0.0)
    tau: float = Field(gt=0.0, lt=1.0)
    workers: int = Field(ge=1)

    @field_validator("scenarios", mode="before")
    @classmethod
    def _parse_scenarios(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple)):
            return tuple(Scenario.parse(v) for v in value)
        return value

    @model_validator(mode="after")
    def _check_matrix(self) -> ExperimentConfig:
        if not self.scenarios or not self.ladder or not self.seeds:
            raise ValueError("scenarios, ladder and seeds must each list at least one value")
        if min(self.ladder) < 1:
            raise ValueError("ladder sizes must be >= 1")
        if min(self.seeds) < 0:
            raise ValueError("seeds must be >= 0")
        if self.manifest is None and max(self.ladder) > self.n_train:
            raise ValueError(f"ladder size {max(self.ladder)} exceeds n_train={self.n_train}")
        return self

    @classmethod
    def defaults(cls) -> dict[str, Any]:
        """Defaults for the keys that the user configuration controls."""
        config = load_config()
        unet, training, prep = config["unet"], config["training"], config["preprocess"]
        return {
            "target_spacing": prep["target_spacing"],
            "size": prep["size"],
            "tau": prep["tau"],
            "base_channels": unet["base_channels"],
            "depth": unet["depth"],
            "dropout_rate": unet["dropout_rate"],
            "hidden_activation": unet["hidden_activation"],
            "lr": training["lr"],
            "batch_size": training["batch_size"],
            "max_epochs": training["max_epochs"],
            "loss_eps": training["loss_eps"],
            "workers": config["runtime"]["max_workers"],
        }

    @classmethod
    def from_values(cls, values: dict[str, Any]) -> ExperimentConfig:
        try:
            return cls.model_validate({**cls.defaults(), **values})
        except ValidationError as exc:
            raise ExperimentConfigError(_first_error(exc)) from exc

    def unet_config(self, out_channels: int, scenario: Scenario) -> UNetConfig:
        return UNetConfig(
            in_channels=scenario.in_channels,
            out_channels=out_channels,
            base_channels=self.base_channels,
            depth=self.depth,
            dropout_rate=self.dropout_rate,
            hidden_activation=self.hidden_activation,
        )

    def train_config(self, scenario: Scenario, out_channels: int, seed: int, checkpoint_dir: Path | None) -> TrainConfig:
        return TrainConfig(
            scenario=scenario,
            unet=self.unet_config(out_channels, scenario),
            lr=self.lr,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            seed=seed,
            loss_eps=self.loss_eps,
            checkpoint_dir=checkpoint_dir,
        )

    def preprocess_settings(self) -> PreprocessSettings:
        hu_window = tuple(load_config()["preprocess"]["hu_window"])
        return PreprocessSettings(target_spacing=self.target_spacing, size=self.size, hu_window=hu_window)  # type: ignore[arg-type]


def _first_error(exc: ValidationError) -> str:
    error = exc.errors()[0]
    where = ".".join(str(part) for part in error.get("loc", ()))
    return f"{where}: {error['msg']}" if where else error["msg"]


def _split_value(key: str, raw: str) -> Any:
    if key in LIST_KEYS:
        return [item.strip() for item in raw.split(",") if item.strip()]
    return raw


def parse_experiment(text: str) -> ExperimentConfig:
    fields = set(ExperimentConfig.model_fields)
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ExperimentConfigError(f"expected 'key = value', got {raw_line.strip()!r}", line=number)
        if key not in fields:
            raise ExperimentConfigError(f"unknown key {key!r}", line=number)
        if key in values:
            raise ExperimentConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", line=number)
        if not raw:
            raise ExperimentConfigError(f"key {key!r} has an empty value", line=number)
        values[key] = _split_value(key, raw)
        lines[key] = number

    try:
        return ExperimentConfig.model_validate({**ExperimentConfig.defaults(), **values})
    except ValidationError as exc:
        error = exc.errors()[0]
        loc = error.get("loc", ())
        line = lines.get(str(loc[0])) if loc else None
        raise ExperimentConfigError(_first_error(exc), line=line) from exc


def load_experiment(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ExperimentConfigError(f"cannot read {path}: {exc}") from exc
    return parse_experiment(text)


def _format(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, Scenario):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_experiment(config: ExperimentConfig) -> str:
    """Canonical form: every set key, sorted, lists without spaces."""
    lines = [
        f"{key} = {_format(value)}"
        for key, value in sorted(config.model_dump().items())
        if value is not None
    ]
    return "\n".join(lines) + "\n"
