"""Bias-corrected Adam."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from ..diffgrid import DiffGrid
from ..errors import ContractViolation

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = ADAM_EPSILON

    @classmethod
    def zeros_like(cls, params: Mapping[str, DiffGrid]) -> AdamState:
        return cls(
            m={name: np.zeros(p.shape, dtype=np.float32) for name, p in params.items()},
            v={name: np.zeros(p.shape, dtype=np.float32) for name, p in params.items()},
        )


def adam_step(
    params: Mapping[str, DiffGrid],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> AdamState:
    """Apply one Adam update to ``params`` in place and advance ``state``."""
    if lr < 0:
        raise ContractViolation(f"learning rate must be >= 0, got {lr}")
    missing = [name for name in params if name not in grads]
    if missing:
        raise ContractViolation(f"no gradient for parameter(s) {', '.join(missing[:5])}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.t
    correction2 = 1.0 - b2**state.t
    for name, param in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != param.shape:
            raise ContractViolation(f"gradient for {name} has shape {g.shape}, expected {param.shape}")
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * g * g
        state.m[name] = np.asarray(m, dtype=np.float32)
        state.v[name] = np.asarray(v, dtype=np.float32)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.value = (param.value - update).astype(param.value.dtype)
    return state


def gradients(params: Mapping[str, DiffGrid]) -> dict[str, np.ndarray]:
    return {name: p.grad for name, p in params.items()}
