"""Deterministic random number generation.

The core generator is splitmix64: the 64-bit state advances by a fixed odd
constant per draw and each output is a finalizer mix of the state.  It was
chosen because it is trivial to reproduce bit-for-bit from its published
constants, so a fixed seed yields an identical draw sequence on every
platform (and in any reimplementation of this toolkit).

Everything else is defined purely in terms of the raw 64-bit stream:

  uniform(0,1)   u = ((z >> 11) + 0.5) * 2**-53   (never exactly 0 or 1)
  gumbel(0,1)    g = -log(-log(u))
  normal(0,1)    Box-Muller pairs from consecutive uniforms, interleaved
                 (z0, z1, z0, z1, ...), surplus draw discarded for odd n
  integers       floor(u * n)
  permutation    Fisher-Yates, descending, j = floor(u * (i+1))

Named substreams are seeded with mix64(seed XOR fnv1a64(name)) so that the
components of a run (init, gumbel, shuffle, synth, split) can be varied
independently while staying tied to one root seed.
"""

from __future__ import annotations

import numpy as np

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """splitmix64 output finalizer for a single 64-bit value."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a stream name, used for substream derivation."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


class SeededRng:
    """splitmix64-backed generator with vectorized sampling helpers."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._state = self.seed

    def split(self, name: str) -> "SeededRng":
        """Independent substream derived from the root seed and a name.

        Derivation uses the seed, not the current state, so substreams do
        not depend on how many draws the parent has consumed.
        """
        return SeededRng(mix64(self.seed ^ fnv1a64(name)))

    def _raw(self, n: int) -> np.ndarray:
        if n == 0:
            return np.empty(0, dtype=np.uint64)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self._state) + steps * np.uint64(_GAMMA)
        self._state = int(z[-1])
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        return z

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """i.i.d. uniforms on (low, high), endpoints excluded."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        z = self._raw(n)
        u = ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        u = low + (high - low) * u
        return u.reshape(shape) if shape else u[0]

    def gumbel(self, shape=()) -> np.ndarray:
        """i.i.d. standard Gumbel draws g = -ln(-ln(u))."""
        return -np.log(-np.log(self.uniform(shape)))

    def normal(self, shape=(), std: float = 1.0) -> np.ndarray:
        """i.i.d. N(0, std^2) draws via Box-Muller."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m, dtype=np.float64)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        out = out[:n] * std
        return out.reshape(shape) if shape else out[0]

    def integers(self, upper: int, shape=()) -> np.ndarray:
        """i.i.d. integers in [0, upper) as floor(u * upper)."""
        u = self.uniform(shape)
        return np.minimum(np.floor(u * upper), upper - 1).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for i in range(n - 1, 0, -1):
            j = min(int(u[n - 1 - i] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
