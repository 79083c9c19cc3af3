"""Input scenarios: which volumes the network sees."""

from __future__ import annotations

import enum
from collections.abc import Sequence
from typing import TYPE_CHECKING

import numpy as np

from ..diffgrid import DiffGrid
from ..errors import ContractViolation
from ..pipeline.masks import single_channel, stack_channels

if TYPE_CHECKING:
    from ..phantom import Subject
    from ..unet3d import UNetConfig


class Scenario(str, enum.Enum):
    CT_ONLY = "CT_ONLY"
    MASK_ONLY = "MASK_ONLY"
    CT_PLUS_MASK = "CT_PLUS_MASK"

    @property
    def in_channels(self) -> int:
        return 2 if self is Scenario.CT_PLUS_MASK else 1

    @classmethod
    def parse(cls, value: str | Scenario) -> Scenario:
        if isinstance(value, Scenario):
            return value
        try:
            return cls(value.strip().upper())
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise ContractViolation(f"unknown scenario {value!r}; choose from {choices}") from None

    def require_compatible(self, config: UNetConfig) -> None:
        if config.in_channels != self.in_channels:
            raise ContractViolation(
                f"scenario {self.value} feeds {self.in_channels} channel(s) but the model expects {config.in_channels}",
            )


def _channels(scenario: Scenario, subject: Subject) -> np.ndarray:
    if scenario is Scenario.MASK_ONLY:
        # the CT is never read in this scenario
        return single_channel(subject.global_mask).value[0]
    subject.ct.require_geometry(subject.global_mask)
    if subject.ct.units != "normalized":
        raise ContractViolation(f"subject {subject.id} has not been preprocessed (CT still in HU)")
    if scenario is Scenario.CT_ONLY:
        return single_channel(subject.ct).value[0]
    return stack_channels(subject.ct, subject.global_mask).value[0]


def assemble_input(scenario: Scenario, subjects: Sequence[Subject]) -> DiffGrid:
    """N×C×D×H×W network input, subjects stacked along N."""
    if not subjects:
        raise ContractViolation("cannot assemble an empty batch")
    return DiffGrid(np.stack([_channels(scenario, s) for s in subjects]))


def assemble_target(subjects: Sequence[Subject], n_structures: int) -> np.ndarray:
    """N×S×D×H×W binary targets, one channel per structure label 1..S."""
    if not subjects:
        raise ContractViolation("cannot assemble an empty batch")
    highest = max(s.labels.max_label() for s in subjects)
    if highest > n_structures:
        raise ContractViolation(f"label {highest} exceeds the {n_structures} configured structures")
    labels = np.stack([s.labels.voxels for s in subjects])
    channels = np.arange(1, n_structures + 1, dtype=labels.dtype).reshape(1, -1, 1, 1, 1)
    return (labels[:, np.newaxis] == channels).astype(np.float32)
