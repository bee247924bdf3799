"""Turning one stage's logits into conditioning input for the next stage.

A generator converts dense logits into hard one-hot class indicators while
keeping a gradient path open: the forward pass emits the one-hot, the
backward pass substitutes the Jacobian of a continuous relaxation
(straight-through).  The indicators are then embedded per label and merged
with the raw sensor channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import SeededRng, Tensor, ops, parameter
from .engine.tensor import accumulate, active_tape
from .errors import ConfigError, DimensionError

ACTIVATIONS = ("tanh", "softmax")


@dataclass(frozen=True)
class TemperatureSchedule:
    """Exponential decay with a floor: tau(e) = max(tau_min, tau0 * exp(-r e))."""

    tau0: float = 1.0
    decay_rate: float = 0.01
    tau_min: float = 0.5

    def validate(self) -> None:
        if self.tau0 <= 0 or self.tau_min <= 0:
            raise ConfigError("temperatures must be positive")
        if self.decay_rate < 0:
            raise ConfigError(f"decay_rate must be >= 0, got {self.decay_rate}")


def anneal(schedule: TemperatureSchedule, epoch: int) -> float:
    return max(schedule.tau_min, schedule.tau0 * math.exp(-schedule.decay_rate * epoch))


@dataclass(frozen=True)
class GeneratorMode:
    """Which sampling trick feeds the conditioning chain during training.

    `act` selects the relaxation used for the straight-through backward:
    "tanh" (elementwise) or "softmax" (across classes).  The hard sample
    distribution is identical either way; softmax gives the smoother
    gradients.  Stochastic sampling is a training device; inference uses
    the deterministic argmax unless `stochastic_inference` is set.
    """

    variant: str = "gumbel_max"  # "naive_max" | "gumbel_max"
    act: str = "tanh"
    schedule: TemperatureSchedule = TemperatureSchedule()
    stochastic_inference: bool = False

    def validate(self) -> None:
        if self.variant not in ("naive_max", "gumbel_max"):
            raise ConfigError(f"unknown generator variant {self.variant!r}")
        if self.act not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.act!r}")
        self.schedule.validate()


class EmbeddingTable:
    """Learnable [num_classes, dim] projection for one label's indicators."""

    def __init__(self, num_classes: int, dim: int | None, rng: SeededRng):
        if dim is None:
            dim = default_embedding_dim(num_classes)
        if dim < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {dim}")
        bound = math.sqrt(6.0 / num_classes)
        self.W = parameter(rng.uniform((num_classes, dim), -bound, bound))

    @property
    def num_classes(self) -> int:
        return self.W.data.shape[0]

    @property
    def dim(self) -> int:
        return self.W.data.shape[1]


def default_embedding_dim(num_classes: int) -> int:
    # half the class count, rounded up so it is defined for odd counts
    return (num_classes + 1) // 2


def _hard_onehot(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-hot at the per-column argmax (ties resolve to the lowest index)."""
    idx = z.argmax(axis=1)
    hard = np.zeros_like(z)
    np.put_along_axis(hard, idx[:, None, :], 1.0, axis=1)
    if ops.MARGIN_SINK is not None and z.shape[1] > 1:
        top = np.sort(z, axis=1)
        ops._note_margin((top[:, -1] - top[:, -2]).min())
    return hard, idx


def _softmax(z: np.ndarray) -> np.ndarray:
    ex = np.exp(z - z.max(axis=1, keepdims=True))
    return ex / ex.sum(axis=1, keepdims=True)


def generate_naive_max(logits: Tensor, soft: bool = False) -> Tensor:
    """One-hot at the argmax; gradient routes to the argmax logit only.

    With soft=True the forward emits mask * logits instead of the mask
    itself (the function whose Jacobian the backward rule implements);
    used by the gradient checker.
    """
    hard, _ = _hard_onehot(logits.data)
    out = Tensor(hard * logits.data if soft else hard)
    tape = active_tape()
    if tape is not None:
        def rule(gy):
            accumulate(logits, gy * hard)
        tape.record(out, rule)
    return out


def generate_gumbel_max(logits: Tensor, tau: float, rng: SeededRng | None,
                        act: str = "tanh", noise: np.ndarray | None = None,
                        soft: bool = False) -> Tensor:
    """Hard categorical sample with a straight-through relaxed backward.

    Forward: add i.i.d. standard Gumbel noise to the logits, divide by the
    temperature, and one-hot the argmax (the relaxation is monotone per
    class, so the argmax is taken on the pre-activation, which avoids
    spurious ties under tanh saturation).  The hard samples follow
    Categorical(softmax(logits)) exactly.

    Backward: the Jacobian of act((logits + g)/tau) w.r.t. the logits.
    `noise` overrides the sampled Gumbel noise (tests force zeros to get
    the deterministic argmax limit); soft=True makes the forward emit the
    relaxation itself.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    if act not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {act!r}")
    if noise is None:
        if rng is None:
            raise ConfigError("generate_gumbel_max needs an rng when noise is not given")
        noise = rng.gumbel(logits.data.shape)
    z = (logits.data + noise) / tau
    hard, _ = _hard_onehot(z)
    relaxed = np.tanh(z) if act == "tanh" else _softmax(z)
    out = Tensor(relaxed if soft else hard)
    tape = active_tape()
    if tape is not None:
        if act == "tanh":
            def rule(gy):
                accumulate(logits, gy * (1.0 - relaxed * relaxed) / tau)
        else:
            def rule(gy):
                inner = (gy * relaxed).sum(axis=1, keepdims=True)
                accumulate(logits, relaxed * (gy - inner) / tau)
        tape.record(out, rule)
    return out


def embed(onehot: Tensor, table: EmbeddingTable) -> Tensor:
    if onehot.data.shape[1] != table.num_classes:
        raise DimensionError(
            f"embed expects {table.num_classes} classes, got {onehot.data.shape[1]}")
    return ops.embedding_lookup(table.W, onehot)


def merge(x: Tensor, embeddings: list[Tensor]) -> Tensor:
    """Channel concatenation: raw channels first, then embeddings in chain order.

    The channel order is part of the model contract; checkpoints depend
    on it.
    """
    if not embeddings:
        return x
    B, _, T = x.data.shape
    for e in embeddings:
        if e.data.shape[0] != B or e.data.shape[2] != T:
            raise DimensionError(
                f"merge batch/time mismatch: x {x.data.shape}, embedding {e.data.shape}")
    return ops.concat([x] + list(embeddings), axis=1)
