"""Minimal float64 tensor engine: tape autodiff, 1-D conv kernels, Adam."""

from . import backend, ops
from .adam import Adam, AdamState, adam_step
from .rng import SeededRng, fnv1a64, mix64
from .tensor import Tape, Tensor, active_tape, backward, parameter

BACKEND = backend.NAME

__all__ = [
    "Adam", "AdamState", "adam_step", "SeededRng", "fnv1a64", "mix64",
    "Tape", "Tensor", "active_tape", "backward", "parameter", "ops",
    "backend", "BACKEND",
]
