"""Flat binary model checkpoints.

Layout: an ASCII magic line, an 8-byte little-endian header length, a JSON
header, then the raw parameter payload.  The header carries the model kind
("chain" | "baseline" | "unet"), its configuration, the optional channel
normalizer, and the ordered parameter index (name + shape); the payload is
the parameters' float64 little-endian bytes concatenated in index order.
Round trips are bit-exact and the bytes are deterministic.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .chain import ChainConfig, LabelSpec, MultiHeadUNet, UNetChain
from .conditioning import GeneratorMode, TemperatureSchedule
from .data import Normalizer
from .engine import SeededRng
from .errors import DataError
from .unet import UNet1D, UNetConfig

MAGIC = b"DENSEHAR1\n"


def schedule_to_dict(s: TemperatureSchedule) -> dict:
    return {"tau0": s.tau0, "decay_rate": s.decay_rate, "tau_min": s.tau_min}


def schedule_from_dict(d: dict) -> TemperatureSchedule:
    return TemperatureSchedule(d["tau0"], d["decay_rate"], d["tau_min"])


def generator_to_dict(g: GeneratorMode) -> dict:
    return {"variant": g.variant, "act": g.act,
            "schedule": schedule_to_dict(g.schedule),
            "stochastic_inference": g.stochastic_inference}


def generator_from_dict(d: dict) -> GeneratorMode:
    return GeneratorMode(variant=d["variant"], act=d["act"],
                         schedule=schedule_from_dict(d["schedule"]),
                         stochastic_inference=d.get("stochastic_inference", False))


def chain_config_to_dict(c: ChainConfig) -> dict:
    return {
        "labels": [{"name": s.name, "num_classes": s.num_classes,
                    "null_class": s.null_class} for s in c.labels],
        "in_channels": c.in_channels,
        "depth": c.depth,
        "base_channels": c.base_channels,
        "kernel_size": c.kernel_size,
        "generator": generator_to_dict(c.generator),
        "teacher_forcing": c.teacher_forcing,
        "embed_dims": list(c.embed_dims) if c.embed_dims is not None else None,
    }


def chain_config_from_dict(d: dict) -> ChainConfig:
    return ChainConfig(
        labels=tuple(LabelSpec(x["name"], x["num_classes"], x.get("null_class", 0))
                     for x in d["labels"]),
        in_channels=d["in_channels"],
        depth=d["depth"],
        base_channels=d["base_channels"],
        kernel_size=d["kernel_size"],
        generator=generator_from_dict(d["generator"]),
        teacher_forcing=d.get("teacher_forcing", False),
        embed_dims=tuple(d["embed_dims"]) if d.get("embed_dims") else None,
    )


def unet_config_to_dict(c: UNetConfig) -> dict:
    return {"in_channels": c.in_channels, "out_classes": c.out_classes,
            "depth": c.depth, "base_channels": c.base_channels,
            "kernel_size": c.kernel_size}


def unet_config_from_dict(d: dict) -> UNetConfig:
    return UNetConfig(**d)


def _model_kind(model) -> tuple[str, dict]:
    if isinstance(model, UNetChain):
        return "chain", chain_config_to_dict(model.config)
    if isinstance(model, MultiHeadUNet):
        return "baseline", chain_config_to_dict(model.config)
    if isinstance(model, UNet1D):
        return "unet", unet_config_to_dict(model.config)
    raise DataError(f"cannot checkpoint object of type {type(model).__name__}")


def save_checkpoint(path, model, normalizer: Normalizer | None = None) -> Path:
    path = Path(path)
    kind, config = _model_kind(model)
    params = model.parameters()
    header = {
        "kind": kind,
        "config": config,
        "normalizer": normalizer.to_dict() if normalizer else None,
        "params": [{"name": name, "shape": list(t.data.shape)}
                   for name, t in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for t in params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return path


def load_checkpoint(path):
    """Returns (model, normalizer_or_None)."""
    path = Path(path)
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    header = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen

    kind = header["kind"]
    rng = SeededRng(0)  # parameters are overwritten below
    if kind == "chain":
        model = UNetChain(chain_config_from_dict(header["config"]), rng)
    elif kind == "baseline":
        model = MultiHeadUNet(chain_config_from_dict(header["config"]), rng)
    elif kind == "unet":
        model = UNet1D(unet_config_from_dict(header["config"]), rng)
    else:
        raise DataError(f"unknown checkpoint kind {kind!r}")

    params = model.parameters()
    listed = [p["name"] for p in header["params"]]
    if listed != list(params.keys()):
        raise DataError("checkpoint parameter index does not match the model")
    for entry in header["params"]:
        t = params[entry["name"]]
        shape = tuple(entry["shape"])
        if shape != t.data.shape:
            raise DataError(f"parameter {entry['name']}: shape {shape} != {t.data.shape}")
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape)
        off += n * 8
        t.data = arr.astype(np.float64).copy()
    if off != len(raw):
        raise DataError(f"{path}: {len(raw) - off} trailing bytes")
    normalizer = (Normalizer.from_dict(header["normalizer"])
                  if header.get("normalizer") else None)
    return model, normalizer
