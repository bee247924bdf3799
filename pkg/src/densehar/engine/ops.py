"""Differentiable operations.

Each op validates its inputs, computes the forward value through the
selected kernel backend, and, when a tape is active, records a backward
rule.  Inputs are coerced to C-contiguous float64 arrays at the boundary.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError, GeometryError, LabelError
from . import backend
from .rng import SeededRng
from .tensor import Tensor, accumulate, active_tape


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# When set (to a list), piecewise ops append their distance to the nearest
# kink (relu zero crossing, pooling argmax switch).  The gradient checker
# uses this to confirm a base point is generic before finite-differencing.
MARGIN_SINK: list | None = None


def _note_margin(m: float) -> None:
    if MARGIN_SINK is not None:
        MARGIN_SINK.append(float(m))


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """1-D cross-correlation over [B, Cin, T] with zero padding."""
    xd, wd, bd = _c(x.data), _c(w.data), _c(b.data)
    if xd.ndim != 3 or wd.ndim != 3:
        raise DimensionError("conv1d expects x[B,Cin,T] and w[Cout,Cin,k]")
    B, Cin, T = xd.shape
    Cout, wc, k = wd.shape
    if wc != Cin:
        raise DimensionError(f"conv1d channel mismatch: x has {Cin}, w expects {wc}")
    if bd.shape != (Cout,):
        raise DimensionError(f"conv1d bias must have shape ({Cout},), got {bd.shape}")
    if stride < 1 or pad < 0:
        raise ContractError("conv1d needs stride >= 1 and pad >= 0")
    tout = (T + 2 * pad - k) // stride + 1
    if k > T + 2 * pad or tout < 1:
        raise GeometryError(f"conv1d output length {tout} < 1 for T={T}, k={k}, pad={pad}")
    out = Tensor(backend.conv1d_fwd(xd, wd, bd, stride, pad))
    tape = active_tape()
    if tape is not None:
        def rule(gy):
            gy = _c(gy)
            accumulate(x, backend.conv1d_bwd_x(gy, wd, stride, pad, T))
            accumulate(w, backend.conv1d_bwd_w(gy, xd, k, stride, pad))
            accumulate(b, gy.sum(axis=(0, 2)))
        tape.record(out, rule)
    return out


def conv_transpose1d(x: Tensor, w: Tensor, b: Tensor, stride: int) -> Tensor:
    """Linear adjoint of conv1d for kernel size equal to stride.

    Upsamples [B, Cin, T] to [B, Cout, T*stride]; w has layout [Cin, Cout, k].
    """
    xd, wd, bd = _c(x.data), _c(w.data), _c(b.data)
    if xd.ndim != 3 or wd.ndim != 3:
        raise DimensionError("conv_transpose1d expects x[B,Cin,T] and w[Cin,Cout,k]")
    B, Cin, T = xd.shape
    wc, Cout, k = wd.shape
    if wc != Cin:
        raise DimensionError(f"conv_transpose1d channel mismatch: x has {Cin}, w expects {wc}")
    if k != stride:
        raise ContractError(f"conv_transpose1d supports k == stride only (k={k}, stride={stride})")
    if bd.shape != (Cout,):
        raise DimensionError(f"conv_transpose1d bias must have shape ({Cout},), got {bd.shape}")
    out = Tensor(backend.convt1d_fwd(xd, wd, bd))
    tape = active_tape()
    if tape is not None:
        def rule(gy):
            gy = _c(gy)
            accumulate(x, backend.convt1d_bwd_x(gy, wd))
            accumulate(w, backend.convt1d_bwd_w(gy, xd))
            accumulate(b, gy.sum(axis=(0, 2)))
        tape.record(out, rule)
    return out


def maxpool1d(x: Tensor, window: int = 2) -> Tensor:
    """Disjoint-window max pooling; gradient flows to the argmax only."""
    xd = _c(x.data)
    B, C, T = xd.shape
    if T % window != 0:
        raise GeometryError(f"maxpool1d needs T divisible by {window}, got T={T}")
    yd, idx = backend.maxpool1d_fwd(xd, window)
    if MARGIN_SINK is not None:
        # ties between relu-clamped zeros are frozen, hence harmless; only
        # windows with a live maximum can switch argmax under perturbation
        win = np.sort(xd.reshape(B, C, T // window, window), axis=3)
        gaps = win[..., -1] - win[..., -2]
        live = win[..., -1] > 0.0
        if live.any():
            _note_margin(gaps[live].min())
    out = Tensor(yd)
    tape = active_tape()
    if tape is not None:
        def rule(gy):
            accumulate(x, backend.maxpool1d_bwd(_c(gy), idx, window, T))
        tape.record(out, rule)
    return out


def relu(x: Tensor) -> Tensor:
    xd = x.data
    if MARGIN_SINK is not None:
        _note_margin(np.abs(xd).min())
    out = Tensor(np.maximum(xd, 0.0))
    tape = active_tape()
    if tape is not None:
        mask = xd > 0.0
        def rule(gy):
            accumulate(x, gy * mask)
        tape.record(out, rule)
    return out


def sum_all(x: Tensor) -> Tensor:
    """Scalar sum of all elements."""
    out = Tensor(np.asarray(x.data.sum()))
    tape = active_tape()
    if tape is not None:
        def rule(gy):
            accumulate(x, float(gy) * np.ones_like(x.data))
        tape.record(out, rule)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors (no broadcasting)."""
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data)
    tape = active_tape()
    if tape is not None:
        def rule(gy):
            accumulate(a, gy)
            accumulate(b, gy)
        tape.record(out, rule)
    return out


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along an axis; backward splits the gradient."""
    if not parts:
        raise ContractError("concat needs at least one tensor")
    ref = parts[0].data.shape
    for p in parts[1:]:
        s = p.data.shape
        if len(s) != len(ref) or any(s[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise DimensionError(f"concat shape mismatch off axis {axis}: {ref} vs {s}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    tape = active_tape()
    if tape is not None:
        sizes = [p.data.shape[axis] for p in parts]
        bounds = np.cumsum(sizes)[:-1]
        def rule(gy):
            for p, piece in zip(parts, np.split(gy, bounds, axis=axis)):
                accumulate(p, piece)
        tape.record(out, rule)
    return out


def split_channels(x: Tensor, sizes: list[int]) -> list[Tensor]:
    """Split along the channel axis into consecutive blocks."""
    if sum(sizes) != x.data.shape[1]:
        raise DimensionError(f"split sizes {sizes} do not sum to {x.data.shape[1]} channels")
    bounds = np.cumsum(sizes)[:-1]
    pieces = np.split(x.data, bounds, axis=1)
    outs = [Tensor(np.ascontiguousarray(p)) for p in pieces]
    tape = active_tape()
    if tape is not None:
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        for i, out in enumerate(outs):
            lo, hi = int(offsets[i]), int(offsets[i + 1])
            def rule(gy, lo=lo, hi=hi):
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                x.grad[:, lo:hi] += gy
            tape.record(out, rule)
    return outs


def embedding_lookup(table: Tensor, onehot: Tensor) -> Tensor:
    """Project class indicators [B,C,T] through a [C,E] table to [B,E,T].

    Accepts soft (relaxed) columns as well; gradients reach both the table
    and the indicator input, which is what lets straight-through samples
    pass gradient upstream.
    """
    W, oh = table.data, onehot.data
    if oh.ndim != 3 or W.ndim != 2:
        raise DimensionError("embedding_lookup expects table[C,E] and onehot[B,C,T]")
    if oh.shape[1] != W.shape[0]:
        raise DimensionError(
            f"embedding_lookup class mismatch: onehot has {oh.shape[1]}, table {W.shape[0]}")
    out_d = np.tensordot(W, oh, axes=([0], [1])).transpose(1, 0, 2)  # B,E,T
    out = Tensor(np.ascontiguousarray(out_d))
    tape = active_tape()
    if tape is not None:
        def rule(gy):
            accumulate(table, np.tensordot(oh, gy, axes=([0, 2], [0, 2])))
            g_oh = np.tensordot(W, gy, axes=([1], [1])).transpose(1, 0, 2)
            accumulate(onehot, np.ascontiguousarray(g_oh))
        tape.record(out, rule)
    return out


def cross_entropy_dense(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean per-timestep negative log-likelihood of integer targets.

    logits: [B,C,T]; targets: int array [B,T].  Uses the log-sum-exp
    stabilization (per-column max subtracted before exponentiation).
    """
    ld = logits.data
    if ld.ndim != 3:
        raise DimensionError("cross_entropy_dense expects logits[B,C,T]")
    B, C, T = ld.shape
    tg = np.asarray(targets)
    if tg.shape != (B, T):
        raise DimensionError(f"targets must have shape ({B},{T}), got {tg.shape}")
    if tg.min() < 0 or tg.max() >= C:
        raise LabelError(f"target ids must lie in [0,{C}), got range "
                         f"[{tg.min()},{tg.max()}]")
    tg = tg.astype(np.int64)
    m = ld.max(axis=1, keepdims=True)
    shifted = ld - m
    ex = np.exp(shifted)
    lse = np.log(ex.sum(axis=1, keepdims=True))
    logp = shifted - lse
    bi = np.arange(B)[:, None]
    ti = np.arange(T)[None, :]
    loss = -logp[bi, tg, ti].mean()
    out = Tensor(np.asarray(loss))
    tape = active_tape()
    if tape is not None:
        probs = ex / ex.sum(axis=1, keepdims=True)
        def rule(gy):
            g = probs.copy()
            g[bi, tg, ti] -= 1.0
            g *= float(gy) / (B * T)
            accumulate(logits, g)
        tape.record(out, rule)
    return out


def gumbel_sample(rng: SeededRng, shape) -> Tensor:
    """Leaf tensor of i.i.d. standard Gumbel draws."""
    return Tensor(rng.gumbel(shape))
