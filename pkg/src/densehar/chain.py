"""Chained UNet classifier and the independent multi-head baseline.

Stage 0 of the chain sees the raw channels; stage i sees the raw channels
merged with embedded hard samples of every earlier stage's prediction, so
the stack realizes a factorized joint distribution over the labels.  The
baseline shares one UNet trunk whose widened head emits all labels at once
with no conditioning.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .conditioning import (EmbeddingTable, GeneratorMode, TemperatureSchedule,
                           anneal, default_embedding_dim, embed,
                           generate_gumbel_max, generate_naive_max, merge)
from .engine import Adam, SeededRng, Tape, Tensor, ops
from .errors import (ConfigError, ContractError, DataError, DimensionError,
                     TrainingDiverged)
from .unet import UNet1D, UNetConfig, unet_forward

# re-export: the schedule is configured alongside the chain
__all__ = [
    "LabelSpec", "ChainConfig", "TrainOptions", "UNetChain", "MultiHeadUNet",
    "build_chain", "build_baseline", "chain_loss", "train", "TrainHistory",
    "TemperatureSchedule",
]


@dataclass(frozen=True)
class LabelSpec:
    name: str
    num_classes: int
    null_class: int = 0

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError(f"label {self.name!r} needs >= 2 classes")
        if not 0 <= self.null_class < self.num_classes:
            raise ConfigError(f"label {self.name!r}: null_class out of range")


@dataclass(frozen=True)
class ChainConfig:
    """Label order plus the per-stage UNet trunk settings.

    The labels tuple IS the conditioning order: the first label is
    predicted from the raw channels alone.  Any permutation is accepted.
    Stage i's UNet input width is in_channels plus the embedding dims of
    stages 0..i-1.
    """

    labels: tuple[LabelSpec, ...]
    in_channels: int
    depth: int = 3
    base_channels: int = 16
    kernel_size: int = 3
    generator: GeneratorMode = GeneratorMode()
    teacher_forcing: bool = False
    embed_dims: tuple[int, ...] | None = None  # default: ceil(C/2) per label

    def validate(self) -> None:
        if not self.labels:
            raise ConfigError("chain needs at least one label")
        for spec in self.labels:
            spec.validate()
        if self.in_channels < 1:
            raise ConfigError("in_channels must be >= 1")
        self.generator.validate()
        if self.embed_dims is not None and len(self.embed_dims) != len(self.labels):
            raise ConfigError("embed_dims must match the number of labels")

    def embedding_dim(self, stage: int) -> int:
        if self.embed_dims is not None:
            return self.embed_dims[stage]
        return default_embedding_dim(self.labels[stage].num_classes)

    def stage_in_channels(self, stage: int) -> int:
        return self.in_channels + sum(self.embedding_dim(j) for j in range(stage))

    def unet_config(self, stage: int) -> UNetConfig:
        return UNetConfig(
            in_channels=self.stage_in_channels(stage),
            out_classes=self.labels[stage].num_classes,
            depth=self.depth,
            base_channels=self.base_channels,
            kernel_size=self.kernel_size,
        )


class UNetChain:
    """Ordered stages of {UNet, embedding table}; the last stage has no table."""

    def __init__(self, config: ChainConfig, rng: SeededRng):
        config.validate()
        self.config = config
        self.stages = []
        for i in range(len(config.labels)):
            unet = UNet1D(config.unet_config(i), rng)
            table = None
            if i < len(config.labels) - 1:
                table = EmbeddingTable(config.labels[i].num_classes,
                                       config.embedding_dim(i), rng)
            self.stages.append({"unet": unet, "embed": table})

    @property
    def label_specs(self) -> tuple[LabelSpec, ...]:
        return self.config.labels

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, stage in enumerate(self.stages):
            for name, t in stage["unet"].parameters().items():
                out[f"stage.{i}.unet.{name}"] = t
            if stage["embed"] is not None:
                out[f"stage.{i}.embed.W"] = stage["embed"].W
        return out

    def forward(self, x: Tensor, mode: str = "infer", rng: SeededRng | None = None,
                tau: float = 1.0, targets: np.ndarray | None = None,
                soft_generate: bool = False) -> list[Tensor]:
        """Per-label dense logits, in chain order.

        mode "train" samples conditions with the configured generator at
        temperature tau; mode "infer" conditions on the argmax (unless the
        generator asks for stochastic inference).  With teacher forcing the
        conditions come from `targets` ([H,B,T] class ids) instead of the
        model's own samples.  soft_generate keeps the relaxed generator
        outputs in the forward pass (gradient-checking hook).
        """
        if mode not in ("train", "infer"):
            raise ContractError(f"unknown mode {mode!r}")
        gen = self.config.generator
        embeddings: list[Tensor] = []
        logits: list[Tensor] = []
        for i, stage in enumerate(self.stages):
            inp = merge(x, embeddings) if embeddings else x
            try:
                y = unet_forward(stage["unet"], inp)
            except (DimensionError, ValueError) as exc:
                raise type(exc)(f"stage {i}: {exc}") from exc
            logits.append(y)
            if stage["embed"] is None:
                continue
            if mode == "train" and self.config.teacher_forcing:
                if targets is None:
                    raise ContractError("teacher forcing needs targets")
                onehot = Tensor(_onehot_ids(targets[i], self.config.labels[i].num_classes))
            elif mode == "train" and gen.variant == "gumbel_max":
                onehot = generate_gumbel_max(y, tau, rng, act=gen.act, soft=soft_generate)
            elif mode == "infer" and gen.stochastic_inference:
                onehot = generate_gumbel_max(y, tau, rng, act=gen.act)
            else:
                onehot = generate_naive_max(y, soft=soft_generate)
            embeddings.append(embed(onehot, stage["embed"]))
        return logits

    def predict(self, x) -> np.ndarray:
        return predict_dense(self, x)


class MultiHeadUNet:
    """One UNet trunk; the head emits every label's classes side by side."""

    def __init__(self, config: ChainConfig, rng: SeededRng):
        config.validate()
        self.config = config
        total = sum(spec.num_classes for spec in config.labels)
        self.unet = UNet1D(UNetConfig(
            in_channels=config.in_channels,
            out_classes=total,
            depth=config.depth,
            base_channels=config.base_channels,
            kernel_size=config.kernel_size,
        ), rng)

    @property
    def label_specs(self) -> tuple[LabelSpec, ...]:
        return self.config.labels

    def parameters(self) -> dict[str, Tensor]:
        return {f"trunk.{name}": t for name, t in self.unet.parameters().items()}

    def forward(self, x: Tensor, mode: str = "infer", rng=None, tau: float = 1.0,
                targets=None, soft_generate: bool = False) -> list[Tensor]:
        stacked = unet_forward(self.unet, x)
        sizes = [spec.num_classes for spec in self.config.labels]
        return ops.split_channels(stacked, sizes)

    def predict(self, x) -> np.ndarray:
        return predict_dense(self, x)


def build_chain(config: ChainConfig, rng: SeededRng) -> UNetChain:
    return UNetChain(config, rng)


def build_baseline(config: ChainConfig, rng: SeededRng) -> MultiHeadUNet:
    return MultiHeadUNet(config, rng)


def _onehot_ids(ids: np.ndarray, num_classes: int) -> np.ndarray:
    B, T = ids.shape
    out = np.zeros((B, num_classes, T))
    np.put_along_axis(out, ids[:, None, :].astype(np.int64), 1.0, axis=1)
    return out


def chain_loss(logits: list[Tensor], targets: np.ndarray) -> Tensor:
    """Sum over labels of dense cross-entropy, each averaged over batch x time."""
    targets = np.asarray(targets)
    if len(logits) != targets.shape[0]:
        raise ContractError(
            f"{len(logits)} logit tensors but {targets.shape[0]} target rows")
    total = ops.cross_entropy_dense(logits[0], targets[0])
    for h in range(1, len(logits)):
        total = ops.add(total, ops.cross_entropy_dense(logits[h], targets[h]))
    return total


def predict_dense(model, x) -> np.ndarray:
    """[H,B,T] class ids from deterministic inference (ties to lowest index)."""
    x = ops.as_tensor(x)
    logits = model.forward(x, mode="infer")
    return np.stack([y.data.argmax(axis=1) for y in logits], axis=0)


@dataclass
class TrainOptions:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    schedule: TemperatureSchedule = field(default_factory=TemperatureSchedule)
    window_length: int = 64
    window_stride: int = 32
    checkpoint_every: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        self.schedule.validate()


@dataclass
class HistoryRow:
    epoch: int
    loss: float
    tau: float
    accuracy: dict[str, float]
    macro_f1: dict[str, float]


TrainHistory = list


def train(model, dataset, opts: TrainOptions, val_dataset=None,
          checkpoint_fn=None) -> TrainHistory:
    """Shuffled mini-batch Adam on the summed per-label cross-entropy.

    Windows the dataset with the configured geometry, anneals the sampling
    temperature once per epoch, and records per-epoch loss plus dense
    accuracy / macro-F1 on `val_dataset` (or on the training windows when
    no validation data is given).  Deterministic for a fixed seed.
    """
    from .data import window as make_windows
    from .metrics import accuracy as dense_accuracy
    from .metrics import macro_f1

    opts.validate()
    windows = make_windows(dataset, opts.window_length, opts.window_stride)
    if not windows:
        raise DataError("dataset produced no training windows")
    val_windows = (make_windows(val_dataset, opts.window_length, opts.window_stride)
                   if val_dataset is not None else windows)

    specs = model.label_specs
    # window label rows are in dataset order; the chain may condition in
    # any permutation of them
    dataset_names = [spec.name for spec in dataset.labels]
    try:
        row_of = [dataset_names.index(spec.name) for spec in specs]
    except ValueError as exc:
        raise ContractError(f"model label missing from dataset: {exc}") from exc
    root = SeededRng(opts.seed)
    shuffle_rng = root.split("shuffle")
    gumbel_rng = root.split("gumbel")
    params = list(model.parameters().values())
    optimizer = Adam(params, lr=opts.lr, beta1=opts.beta1, beta2=opts.beta2, eps=opts.eps)

    history: TrainHistory = []
    n = len(windows)
    for epoch in range(opts.epochs):
        tau = anneal(opts.schedule, epoch)
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n - opts.batch_size + 1, opts.batch_size):
            batch = [windows[j] for j in order[start:start + opts.batch_size]]
            x = np.stack([wnd.x for wnd in batch])
            targets = np.stack([wnd.y for wnd in batch], axis=1)[row_of]  # H,B,L
            with Tape() as tape:
                logits = model.forward(Tensor(x), mode="train", rng=gumbel_rng,
                                       tau=tau, targets=targets)
                loss = chain_loss(logits, targets)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDiverged(epoch)
                optimizer.zero_grad()
                tape.backward(loss)
            optimizer.step()
            losses.append(value)
        if not losses:
            raise DataError(
                f"batch size {opts.batch_size} exceeds window count {n}")

        preds, truths = _predict_windows(model, val_windows, row_of)
        acc = {spec.name: dense_accuracy(preds[h], truths[h])
               for h, spec in enumerate(specs)}
        f1 = {spec.name: macro_f1(preds[h], truths[h], spec.num_classes)
              for h, spec in enumerate(specs)}
        history.append(HistoryRow(epoch=epoch, loss=float(np.mean(losses)),
                                  tau=tau, accuracy=acc, macro_f1=f1))
        if checkpoint_fn and opts.checkpoint_every and (epoch + 1) % opts.checkpoint_every == 0:
            checkpoint_fn(model, epoch)
    return history


def _predict_windows(model, windows, row_of) -> tuple[np.ndarray, np.ndarray]:
    """Flat per-label (pred, truth) arrays over a list of windows.

    Predictions come out in chain order; `row_of` maps each chain position
    to its dataset label row so the truths line up.
    """
    preds, truths = [], []
    for wnd in windows:
        p = predict_dense(model, wnd.x[None])  # H,1,L
        preds.append(p[:, 0, :wnd.valid])
        truths.append(wnd.y[row_of, :wnd.valid])
    return np.concatenate(preds, axis=1), np.concatenate(truths, axis=1)
