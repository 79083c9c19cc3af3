"""Dense N-d grids with a recorded operation tape for reverse-mode differentiation.

Every op in :mod:`gbmask.diffgrid.ops` produces a new :class:`DiffGrid` whose
``_parents`` and ``_backward`` fields form the tape.  :func:`backward` walks the
tape once in reverse topological order, accumulates into leaf ``grad`` arrays
and then releases the interior nodes.  A later call whose walk reaches any
released node is a contract violation until the forward pass is recorded again.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Any

import numpy as np

from ..errors import ContractViolation

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_DTYPE: ContextVar[np.dtype] = ContextVar("gbmask_diffgrid_dtype", default=np.dtype(np.float32))
_SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def default_dtype() -> np.dtype:
    """Return the working dtype for newly created grids (float32 unless overridden)."""
    return _DTYPE.get()


@contextmanager
def precision(dtype: str | np.dtype | type) -> Iterator[None]:
    """Temporarily switch the working dtype, e.g. ``with precision("float64"):``."""
    resolved = np.dtype(dtype)
    if resolved not in _SUPPORTED_DTYPES:
        raise ContractViolation(f"unsupported grid dtype {resolved}; use float32 or float64")
    token = _DTYPE.set(resolved)
    try:
        yield
    finally:
        _DTYPE.reset(token)


class DiffGrid:
    """A numeric array plus the bookkeeping needed to differentiate through it."""

    __slots__ = ("_backward", "_grad", "_op", "_parents", "_released", "name", "requires_grad", "value")

    def __init__(self, value: Any, *, requires_grad: bool = False, name: str | None = None):
        self.value: np.ndarray = np.array(value, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.name = name
        self._grad: np.ndarray | None = None
        self._parents: tuple[DiffGrid, ...] = ()
        self._backward: BackwardFn | None = None
        self._op: str | None = None
        self._released = False

    @classmethod
    def from_op(
        cls,
        value: np.ndarray,
        parents: Sequence[DiffGrid],
        backward_fn: BackwardFn,
        op: str,
    ) -> DiffGrid:
        """Wrap an op result, recording it on the tape when any parent needs a gradient."""
        out = cls.__new__(cls)
        out.value = value
        out.name = None
        out._grad = None
        out._released = False
        out.requires_grad = any(p.requires_grad for p in parents)
        out._op = op
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward_fn
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- array protocol --

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return int(self.value.size)

    @property
    def dtype(self) -> np.dtype:
        return self.value.dtype

    @property
    def is_leaf(self) -> bool:
        return self._op is None

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, value: np.ndarray) -> None:
        if value.shape != self.value.shape:
            raise ContractViolation(f"grad shape {value.shape} does not match value shape {self.value.shape}")
        self._grad = value

    def zero_grad(self) -> None:
        self._grad = None

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractViolation(f"item() needs a single-element grid, got shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def detach(self) -> DiffGrid:
        out = DiffGrid.__new__(DiffGrid)
        out.value = self.value
        out.name = self.name
        out.requires_grad = False
        out._grad = None
        out._parents = ()
        out._backward = None
        out._op = None
        out._released = False
        return out

    def __add__(self, other: DiffGrid) -> DiffGrid:
        from .ops import add

        return add(self, other)

    def __mul__(self, other: DiffGrid) -> DiffGrid:
        from .ops import mul

        return mul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        op = f" op={self._op}" if self._op else ""
        return f"DiffGrid(shape={self.shape}, dtype={self.dtype}{label}{op}, requires_grad={self.requires_grad})"


def _topological_order(root: DiffGrid) -> list[DiffGrid]:
    order: list[DiffGrid] = []
    visited: set[int] = set()
    stack: list[tuple[DiffGrid, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        if node._released:
            raise ContractViolation(
                f"tape through {node._op} already consumed by an earlier backward; record the forward pass again",
            )
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: DiffGrid) -> None:
    """Accumulate d(root)/d(leaf) into every leaf that requires a gradient."""
    if root.size != 1:
        raise ContractViolation(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        raise ContractViolation("root does not depend on any grid that requires a gradient")

    order = _topological_order(root)
    pending: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        upstream = pending.pop(id(node), None)
        if node.is_leaf:
            if upstream is not None:
                node.grad = (node.grad + upstream).astype(node.value.dtype, copy=False)
            continue
        if upstream is None or node._backward is None:
            continue
        parent_grads = node._backward(upstream)
        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            existing = pending.get(id(parent))
            pending[id(parent)] = parent_grad if existing is None else existing + parent_grad

    for node in order:
        if not node.is_leaf:
            node._released = True
            node._parents = ()
            node._backward = None
