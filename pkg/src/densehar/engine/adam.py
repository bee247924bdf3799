"""Adam optimizer (bias-corrected, eps outside the square root)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DimensionError
from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def init(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=0,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One in-place Adam update; increments state.t by exactly 1."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise DimensionError(f"grad shape {g.shape} does not match param {p.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        p -= state.lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)


class Adam:
    """Convenience wrapper binding an AdamState to a list of leaf tensors."""

    def __init__(self, params: list[Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState.init([p.data for p in self.params],
                                    lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        adam_step([p.data for p in self.params],
                  [p.grad if p.grad is not None else np.zeros_like(p.data)
                   for p in self.params],
                  self.state)

    def zero_grad(self):
        for p in self.params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            else:
                p.grad[...] = 0.0
