"""Soft Dice loss over structure channels."""

from __future__ import annotations

import numpy as np

from ..diffgrid import DiffGrid
from ..errors import ContractViolation

LOSS_EPSILON = 1e-6
_SPATIAL = (2, 3, 4)


def _target_values(target: DiffGrid | np.ndarray) -> np.ndarray:
    return np.asarray(target.value if isinstance(target, DiffGrid) else target, dtype=np.float64)


def dice_loss(pred: DiffGrid, target: DiffGrid | np.ndarray, eps: float = LOSS_EPSILON) -> DiffGrid:
    """Mean over batch and structures of ``1 - 2·Σpg / (Σp² + Σg² + eps)``.

    ``pred`` holds probabilities N×S×D×H×W; ``target`` is binary with the same
    shape.  Sums run in float64.
    """
    g = _target_values(target)
    if pred.ndim != 5 or pred.shape != g.shape:
        raise ContractViolation(f"dice_loss needs equal N×S×D×H×W shapes, got {pred.shape} and {g.shape}")
    if not np.isin(g, (0.0, 1.0)).all():
        raise ContractViolation("dice_loss target must be binary")
    if eps < 0:
        raise ContractViolation(f"eps must be >= 0, got {eps}")

    p = pred.value.astype(np.float64)
    inter = (p * g).sum(axis=_SPATIAL, keepdims=True)
    denom = (p * p).sum(axis=_SPATIAL, keepdims=True) + (g * g).sum(axis=_SPATIAL, keepdims=True) + eps
    count = pred.shape[0] * pred.shape[1]
    loss = float(np.mean(1.0 - 2.0 * inter / denom))

    def _backward(upstream: np.ndarray) -> tuple[np.ndarray]:
        scale = float(upstream.reshape(-1)[0]) * -2.0 / count
        grad = scale * (g * denom - inter * 2.0 * p) / (denom * denom)
        return (grad.astype(pred.dtype),)

    return DiffGrid.from_op(np.asarray(loss, dtype=pred.dtype), (pred,), _backward, "dice_loss")


def per_structure_dice_loss(pred: np.ndarray, target: np.ndarray, eps: float = LOSS_EPSILON) -> np.ndarray:
    """Loss per (n, s) pair without recording a tape."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(target, dtype=np.float64)
    inter = (p * g).sum(axis=_SPATIAL)
    denom = (p * p).sum(axis=_SPATIAL) + (g * g).sum(axis=_SPATIAL) + eps
    return 1.0 - 2.0 * inter / denom
