"""Epoch loop with best-on-validation model selection."""

from __future__ import annotations

import csv
import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ..diffgrid import RngState, backward
from ..errors import ContractViolation, NonFiniteLossError
from ..telemetry import get_collector, stage
from ..unet3d import UNetConfig, UNetModel, build, forward
from .checkpoint import save_checkpoint
from .loss import LOSS_EPSILON, dice_loss, per_structure_dice_loss
from .optim import AdamState, adam_step, gradients
from .scenario import Scenario, assemble_input, assemble_target

if TYPE_CHECKING:
    from ..phantom import Subject

log = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.mckp"
HISTORY_CSV = "history.csv"
HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "seconds")

# child-stream keys of the training seed
_INIT_STREAM, _SHUFFLE_STREAM, _DROPOUT_STREAM = 0, 1, 2


@dataclass(frozen=True)
class TrainConfig:
    scenario: Scenario
    unet: UNetConfig
    lr: float = 1e-4
    batch_size: int = 1
    max_epochs: int = 100
    seed: int = 0
    loss_eps: float = LOSS_EPSILON
    checkpoint_dir: Path | None = None

    def __post_init__(self) -> None:
        self.scenario.require_compatible(self.unet)
        if self.lr < 0 or not math.isfinite(self.lr):
            raise ContractViolation(f"lr must be a finite value >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ContractViolation(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ContractViolation(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.loss_eps < 0:
            raise ContractViolation(f"loss_eps must be >= 0, got {self.loss_eps}")

    @classmethod
    def overfit_check(cls, scenario: Scenario, out_channels: int, *, seed: int = 0) -> TrainConfig:
        """Desk-scale memorization run: one subject should reach a training loss below 0.2.

        A depth-2, base-4 network with rectifier activations, no dropout and lr 1e-2 for
        200 epochs.  The sigmoid defaults at lr 1e-4 stay near a loss of 1 over this budget.
        """
        unet = UNetConfig(
            in_channels=scenario.in_channels,
            out_channels=out_channels,
            base_channels=4,
            depth=2,
            dropout_rate=0.0,
            hidden_activation="rectifier",
        )
        return cls(scenario=scenario, unet=unet, lr=1e-2, max_epochs=200, seed=seed)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1] if self.best_epoch else math.inf

    @property
    def best_seconds(self) -> float:
        """Wall-clock seconds spent until the selected epoch finished."""
        return float(sum(self.seconds[: self.best_epoch]))

    @property
    def total_seconds(self) -> float:
        return float(sum(self.seconds))

    def append(self, train_loss: float, val_loss: float, seconds: float) -> None:
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.seconds.append(seconds)

    def rows(self) -> list[tuple[int, float, float, float]]:
        return [
            (epoch, t, v, s)
            for epoch, (t, v, s) in enumerate(zip(self.train_loss, self.val_loss, self.seconds), start=1)
        ]


def write_history_csv(history: TrainHistory, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(HISTORY_COLUMNS)
        for epoch, train_loss, val_loss, seconds in history.rows():
            writer.writerow([epoch, f"{train_loss:.8f}", f"{val_loss:.8f}", f"{seconds:.4f}"])
    return path


def read_history_csv(path: str | Path) -> TrainHistory:
    history = TrainHistory()
    with open(path, encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            history.append(float(row["train_loss"]), float(row["val_loss"]), float(row["seconds"]))
    if history.val_loss:
        history.best_epoch = int(np.argmin(history.val_loss)) + 1
    return history


def validation_loss(model: UNetModel, scenario: Scenario, subjects: Sequence[Subject], eps: float = LOSS_EPSILON) -> float:
    """Mean eval-mode Dice loss over subjects and structures."""
    losses = []
    n_structures = model.config.out_channels
    for subject in subjects:
        pred = model.predict(assemble_input(scenario, [subject]))
        loss = per_structure_dice_loss(pred, assemble_target([subject], n_structures), eps)
        value = float(loss.mean())
        if not math.isfinite(value):
            raise NonFiniteLossError(-1, subject.id, value)
        losses.append(value)
    return float(np.mean(losses))


EpochCallback = Callable[[int, float, float, float], None]


def train(
    config: TrainConfig,
    train_subjects: Sequence[Subject],
    val_subjects: Sequence[Subject],
    *,
    on_epoch: EpochCallback | None = None,
) -> tuple[UNetModel, TrainHistory]:
    """Train from scratch and return the best-on-validation model with its history."""
    if not train_subjects:
        raise ContractViolation("training set is empty")
    if not val_subjects:
        raise ContractViolation("validation set is empty; model selection needs at least one subject")

    root = RngState(config.seed)
    model = build(config.unet, root.spawn(_INIT_STREAM))
    shuffle_rng = root.spawn(_SHUFFLE_STREAM)
    dropout_rng = root.spawn(_DROPOUT_STREAM)
    adam = AdamState.zeros_like(model.parameters)
    history = TrainHistory()
    best_state = model.state_copy()
    metrics = get_collector()
    n_structures = config.unet.out_channels

    with stage(
        log,
        "train",
        scenario=config.scenario.value,
        n_train=len(train_subjects),
        n_val=len(val_subjects),
        epochs=config.max_epochs,
        seed=config.seed,
    ):
        for epoch in range(1, config.max_epochs + 1):
            started = time.monotonic()
            order = shuffle_rng.permutation(len(train_subjects))
            batch_losses = []
            for start in range(0, len(order), config.batch_size):
                batch = [train_subjects[i] for i in order[start : start + config.batch_size]]
                model.zero_grad()
                pred = forward(model, assemble_input(config.scenario, batch), "train", dropout_rng)
                loss = dice_loss(pred, assemble_target(batch, n_structures), config.loss_eps)
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteLossError(epoch, ",".join(s.id for s in batch), value)
                backward(loss)
                adam_step(model.parameters, gradients(model.parameters), adam, config.lr)
                batch_losses.append(value)
                metrics.inc("train.steps")

            try:
                val_loss = validation_loss(model, config.scenario, val_subjects, config.loss_eps)
            except NonFiniteLossError as exc:
                raise NonFiniteLossError(epoch, exc.subject_id, exc.value) from None
            seconds = time.monotonic() - started
            train_loss = float(np.mean(batch_losses))
            history.append(train_loss, val_loss, seconds)
            metrics.observe("train.epoch_seconds", seconds)

            improved = val_loss < history.best_val_loss
            if improved:
                history.best_epoch = epoch
                best_state = model.state_copy()
                if config.checkpoint_dir is not None:
                    save_checkpoint(Path(config.checkpoint_dir) / BEST_CHECKPOINT, model, config.scenario, epoch, adam)
                    metrics.inc("train.checkpoints")
            log.info(
                "train_epoch epoch=%d train_loss=%.6f val_loss=%.6f seconds=%.3f improved=%s",
                epoch,
                train_loss,
                val_loss,
                seconds,
                improved,
            )
            if on_epoch is not None:
                on_epoch(epoch, train_loss, val_loss, seconds)

    model.load_state(*best_state)
    if config.checkpoint_dir is not None:
        write_history_csv(history, Path(config.checkpoint_dir) / HISTORY_CSV)
    log.info(
        "train_done best_epoch=%d best_val_loss=%.6f best_seconds=%.3f total_seconds=%.3f",
        history.best_epoch,
        history.best_val_loss,
        history.best_seconds,
        history.total_seconds,
    )
    return model, history
