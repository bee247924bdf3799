"""Tensors and the reverse-mode tape.

A Tensor wraps a 64-bit float ndarray.  Operations executed while a Tape is
active append a record (output node, backward rule); records are therefore
in topological order by construction, and running the rules in reverse
order propagates gradients from a scalar loss to every reachable leaf.

Tensors created through :func:`parameter` start with a zero gradient, so a
parameter that a loss never touches reads as zero-gradient after backward.
Gradients accumulate across backward calls; optimizers reset them.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ContractError

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """Shape-tagged float64 array with an optional gradient."""

    __slots__ = ("data", "grad", "node")

    def __init__(self, data, grad: Optional[np.ndarray] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = grad
        self.node: Optional[int] = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, node={self.node})"


def parameter(data) -> Tensor:
    """Leaf tensor with a pre-allocated zero gradient."""
    t = Tensor(data)
    t.grad = np.zeros_like(t.data)
    return t


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add a gradient contribution, allocating storage on first use."""
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


class Tape:
    """Ordered record of executed operations for one forward pass."""

    def __init__(self):
        self._records: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False

    def record(self, out: Tensor, rule) -> None:
        """Register `rule(gy)` as the backward step producing `out`.

        The rule receives the accumulated gradient of `out` and must add
        contributions into the grads of the operation's inputs.
        """
        out.node = len(self._records)
        self._records.append((out, rule))

    def __len__(self):
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def backward(loss: Tensor, tape: Tape) -> None:
    """Propagate d loss / d node to every leaf reachable on the tape.

    Gradients of tensors produced on the tape are reset first; leaf
    gradients are accumulated into (parameters start at zero).
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss.node is None:
        raise ContractError("loss was not produced on the given tape")
    for out, _ in tape._records:
        out.grad = None
    loss.grad = np.ones_like(loss.data)
    for out, rule in reversed(tape._records):
        if out.grad is None:
            continue
        rule(out.grad)
