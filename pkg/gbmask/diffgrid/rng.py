"""Seeded random state shared explicitly by every stochastic operation.

The generator is numpy's PCG64 seeded through ``SeedSequence(seed)``.  Only the
raw 64-bit stream is consumed: uniforms are the 53-bit doubles produced by
``Generator.random`` and normals are derived from them by the Box-Muller
transform, so a seed reproduces the same draws on every platform.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ContractViolation

ALGORITHM = "PCG64"
_SEED_LIMIT = 2**64


class RngState:
    """A named deterministic generator; pass it explicitly, never keep it global."""

    __slots__ = ("_generator", "algorithm", "seed")

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < _SEED_LIMIT:
            raise ContractViolation(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.algorithm = ALGORITHM
        self._generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    def uniform(self, size: int | tuple[int, ...], low: float = 0.0, high: float = 1.0) -> np.ndarray:
        draws = self._generator.random(size)
        if low == 0.0 and high == 1.0:
            return draws
        return low + (high - low) * draws

    def normal(self, size: int | tuple[int, ...], mean: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = math.prod(shape)
        pairs = (count + 1) // 2
        u = self._generator.random((2, pairs))
        radius = np.sqrt(-2.0 * np.log1p(-u[0]))
        angle = 2.0 * math.pi * u[1]
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:count]
        return mean + sigma * z.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self._generator.random(n), kind="stable")

    def spawn(self, *key: int) -> RngState:
        """Derive an independent child state addressed by ``key`` (not by draw order)."""
        return RngState(derive_seed(self.seed, *key))

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed}, algorithm={self.algorithm!r})"


def derive_seed(seed: int, *key: int) -> int:
    """Map ``(seed, key...)`` to a child seed; distinct keys give independent streams."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1, np.uint64)[0])
