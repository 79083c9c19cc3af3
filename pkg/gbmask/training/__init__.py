"""Dice loss, Adam, scenarios, checkpoints and the training loop."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .loss import LOSS_EPSILON, dice_loss, per_structure_dice_loss
from .optim import AdamState, adam_step, gradients
from .scenario import Scenario, assemble_input, assemble_target
from .trainer import (
    BEST_CHECKPOINT,
    HISTORY_CSV,
    TrainConfig,
    TrainHistory,
    read_history_csv,
    train,
    validation_loss,
    write_history_csv,
)

__all__ = [
    "BEST_CHECKPOINT",
    "HISTORY_CSV",
    "LOSS_EPSILON",
    "AdamState",
    "Checkpoint",
    "Scenario",
    "TrainConfig",
    "TrainHistory",
    "adam_step",
    "assemble_input",
    "assemble_target",
    "dice_loss",
    "gradients",
    "load_checkpoint",
    "per_structure_dice_loss",
    "read_history_csv",
    "save_checkpoint",
    "train",
    "validation_loss",
    "write_history_csv",
]
