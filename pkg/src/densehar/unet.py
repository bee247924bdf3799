"""1-D UNet for dense per-timestep classification.

Encoder of double-conv blocks with max pooling, a double-conv bottleneck,
decoder of stride-2 transposed-conv upsampling with skip concatenation and
double-conv blocks, and a 1x1 classification head.  Output time length
always equals input time length; inputs whose length is not divisible by
2^depth are rejected (callers pad).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import SeededRng, Tensor, ops, parameter
from .errors import ConfigError, DimensionError, GeometryError


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int
    out_classes: int
    depth: int = 3
    base_channels: int = 16
    kernel_size: int = 3

    def validate(self) -> None:
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.out_classes < 1:
            raise ConfigError(f"out_classes must be >= 1, got {self.out_classes}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")


class Conv1d:
    """Convolution layer; weights are scaled-uniform with bound sqrt(6/fan_in)."""

    def __init__(self, cin: int, cout: int, k: int, rng: SeededRng, pad=None):
        bound = math.sqrt(6.0 / (cin * k))
        self.w = parameter(rng.uniform((cout, cin, k), -bound, bound))
        self.b = parameter(np.zeros(cout))
        self.pad = (k - 1) // 2 if pad is None else pad

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.w, self.b, stride=1, pad=self.pad)


class ConvTranspose1d:
    """Stride-k upsampling layer (kernel size equals stride, fan_in = cin)."""

    def __init__(self, cin: int, cout: int, stride: int, rng: SeededRng):
        bound = math.sqrt(6.0 / cin)
        self.w = parameter(rng.uniform((cin, cout, stride), -bound, bound))
        self.b = parameter(np.zeros(cout))
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv_transpose1d(x, self.w, self.b, self.stride)


class UNet1D:
    def __init__(self, config: UNetConfig, rng: SeededRng):
        config.validate()
        self.config = config
        self.use_skips = True  # test hook; zeroes the skip paths when False
        k = config.kernel_size
        chans = [config.base_channels * 2 ** level for level in range(config.depth + 1)]
        self.enc = []
        prev = config.in_channels
        for level in range(config.depth):
            self.enc.append({
                "conv1": Conv1d(prev, chans[level], k, rng),
                "conv2": Conv1d(chans[level], chans[level], k, rng),
            })
            prev = chans[level]
        self.bottleneck = {
            "conv1": Conv1d(chans[-2], chans[-1], k, rng),
            "conv2": Conv1d(chans[-1], chans[-1], k, rng),
        }
        # built top-down (level depth-1 first) so creation order matches use
        self.dec = {}
        for level in range(config.depth - 1, -1, -1):
            self.dec[level] = {
                "up": ConvTranspose1d(chans[level + 1], chans[level], 2, rng),
                "conv1": Conv1d(2 * chans[level], chans[level], k, rng),
                "conv2": Conv1d(chans[level], chans[level], k, rng),
            }
        self.head = Conv1d(chans[0], config.out_classes, 1, rng, pad=0)

    def parameters(self) -> dict[str, Tensor]:
        """Stable name -> tensor map (`enc.0.conv1.w`, ... ordering fixed)."""
        out: dict[str, Tensor] = {}
        for level, block in enumerate(self.enc):
            for name, layer in block.items():
                out[f"enc.{level}.{name}.w"] = layer.w
                out[f"enc.{level}.{name}.b"] = layer.b
        for name, layer in self.bottleneck.items():
            out[f"bottleneck.{name}.w"] = layer.w
            out[f"bottleneck.{name}.b"] = layer.b
        for level in range(self.config.depth - 1, -1, -1):
            for name in ("up", "conv1", "conv2"):
                layer = self.dec[level][name]
                out[f"dec.{level}.{name}.w"] = layer.w
                out[f"dec.{level}.{name}.b"] = layer.b
        out["head.w"] = self.head.w
        out["head.b"] = self.head.b
        return out

    def forward(self, x: Tensor) -> Tensor:
        return unet_forward(self, x)


def build_unet(config: UNetConfig, rng: SeededRng) -> UNet1D:
    return UNet1D(config, rng)


def parameter_count(config: UNetConfig) -> int:
    """Closed-form parameter count for a given configuration."""
    k = config.kernel_size
    chans = [config.base_channels * 2 ** level for level in range(config.depth + 1)]
    def conv(cin, cout, ksz):
        return cout * cin * ksz + cout
    total = 0
    prev = config.in_channels
    for level in range(config.depth):
        total += conv(prev, chans[level], k) + conv(chans[level], chans[level], k)
        prev = chans[level]
    total += conv(chans[-2], chans[-1], k) + conv(chans[-1], chans[-1], k)
    for level in range(config.depth):
        total += chans[level + 1] * chans[level] * 2 + chans[level]  # up
        total += conv(2 * chans[level], chans[level], k) + conv(chans[level], chans[level], k)
    total += conv(chans[0], config.out_classes, 1)
    return total


def unet_forward(model: UNet1D, x: Tensor) -> Tensor:
    """Dense logits [B, out_classes, T] for input [B, in_channels, T]."""
    cfg = model.config
    if x.data.ndim != 3 or x.data.shape[1] != cfg.in_channels:
        raise DimensionError(
            f"expected input [B,{cfg.in_channels},T], got {x.data.shape}")
    T = x.data.shape[2]
    divisor = 2 ** cfg.depth
    if T % divisor != 0:
        need = (T // divisor + 1) * divisor
        raise GeometryError(
            f"time length {T} not divisible by 2^{cfg.depth}; pad to {need}")
    skips = []
    a = x
    for block in model.enc:
        a = ops.relu(block["conv1"](a))
        a = ops.relu(block["conv2"](a))
        skips.append(a)
        a = ops.maxpool1d(a, 2)
    a = ops.relu(model.bottleneck["conv1"](a))
    a = ops.relu(model.bottleneck["conv2"](a))
    for level in range(cfg.depth - 1, -1, -1):
        block = model.dec[level]
        a = block["up"](a)
        skip = skips[level]
        if not model.use_skips:
            skip = Tensor(np.zeros_like(skip.data))
        a = ops.concat([skip, a], axis=1)
        a = ops.relu(block["conv1"](a))
        a = ops.relu(block["conv2"](a))
    return model.head(a)
