"""Datasets: synthetic generation, CSV round-trip, windowing, normalization.

The synthetic generator produces the interference structure this toolkit
is built around: a dominant walking oscillation shared across channels,
weak gesture pulses with per-class channel signatures riding on top, and
dense labels for both activities at every time step.  The amplitude ratio
between the two (the dominance ratio) is the difficulty knob.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chain import LabelSpec
from .engine import SeededRng
from .errors import ConfigError, DataError, ParseError

DEFAULT_CHANNELS = ("acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z")


@dataclass
class SampleSequence:
    """One recording: X[K,T] float signal, Y[H,T] integer class ids."""

    id: str
    x: np.ndarray
    y: np.ndarray
    sample_rate_hz: float

    @property
    def length(self) -> int:
        return self.x.shape[1]


@dataclass
class Dataset:
    sequences: list[SampleSequence]
    labels: tuple[LabelSpec, ...]
    channel_names: tuple[str, ...]
    class_names: tuple[tuple[str, ...], ...] = ()
    normalized: bool = False

    @property
    def num_channels(self) -> int:
        return len(self.channel_names)

    def validate(self) -> None:
        for seq in self.sequences:
            if seq.x.shape[0] != self.num_channels:
                raise DataError(f"sequence {seq.id}: expected {self.num_channels} channels")
            if seq.y.shape != (len(self.labels), seq.length):
                raise DataError(f"sequence {seq.id}: label matrix shape {seq.y.shape}")
            if not np.all(np.isfinite(seq.x)):
                raise DataError(f"sequence {seq.id}: non-finite signal values")
            for h, spec in enumerate(self.labels):
                if seq.y[h].min() < 0 or seq.y[h].max() >= spec.num_classes:
                    raise DataError(f"sequence {seq.id}: label {spec.name} id out of range")


@dataclass(frozen=True)
class GestureTemplate:
    """Smooth pulse added to the signal while a gesture is active.

    channel_weights gives the per-channel loading (signed), humps the
    number of half-sine lobes (1 = single bump, 2 = up-down wiggle).
    """

    name: str
    channel_weights: tuple[float, ...]
    duration_s: tuple[float, float]
    humps: int = 1


def default_gesture_templates(num_channels: int = 6) -> tuple[GestureTemplate, ...]:
    if num_channels != 6:
        raise ConfigError("default templates are defined for 6 channels")
    return (
        GestureTemplate("up", (0, 0, 1.0, 0, 0.4, 0), (1.5, 1.8), 1),
        GestureTemplate("down", (0, 0, -1.0, 0, 0.4, 0), (1.5, 1.8), 1),
        GestureTemplate("left", (0, 1.0, 0, 0, 0, 0.4), (1.5, 1.8), 1),
        GestureTemplate("right", (0, -1.0, 0, 0, 0, -0.4), (1.5, 1.7), 1),
        GestureTemplate("lean_left", (0.5, 0, 0, 1.0, 0, 0), (1.5, 1.7), 1),
        GestureTemplate("lean_right", (0.5, 0, 0, -1.0, 0, 0), (1.5, 1.7), 1),
        GestureTemplate("roll_left", (0, 0, 0, 0, 1.0, 0.6), (1.9, 2.1), 2),
        GestureTemplate("roll_right", (0, 0, 0, 0, -1.0, 0.6), (1.9, 2.1), 2),
    )


@dataclass
class SynthConfig:
    """Synthetic recording generator settings.

    The walking oscillation touches every channel (heaviest on the
    accelerometers); gesture pulses are scaled by gesture_amplitude, so
    walk_amplitude / gesture_amplitude is the dominance ratio.  Label
    consistency holds for noise_std up to roughly half the gesture
    amplitude; above that individual events drown.
    """

    seed: int = 0
    num_sequences: int = 20
    duration_s: float = 48.0
    sample_rate_hz: float = 12.5
    walk_freq_hz: float = 2.0
    walk_amplitude: float = 2.0
    gesture_amplitude: float = 0.5
    walk_segment_s: tuple[float, float] = (4.0, 10.0)
    phase_jitter: float = 1.0
    walk_channel_weights: tuple[float, ...] = (1.0, 0.7, 0.9, 0.25, 0.2, 0.15)
    walk_harmonic_weights: tuple[float, ...] = (0.0, 0.4, 0.0, 0.2, 0.0, 0.0)
    gestures_per_sequence: int = 12
    min_gap_s: float = 0.4
    noise_std: float = 0.25
    templates: tuple[GestureTemplate, ...] = field(default_factory=default_gesture_templates)

    @property
    def dominance_ratio(self) -> float:
        return self.walk_amplitude / self.gesture_amplitude

    def validate(self) -> None:
        if self.num_sequences < 1:
            raise ConfigError("num_sequences must be >= 1")
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ConfigError("duration and sample rate must be positive")
        if self.gesture_amplitude <= 0:
            raise ConfigError("gesture_amplitude must be positive")
        if self.walk_amplitude < 0:
            raise ConfigError("walk_amplitude must be >= 0")
        if self.walk_segment_s[0] <= 0 or self.walk_segment_s[1] < self.walk_segment_s[0]:
            raise ConfigError("walk_segment_s must be a positive (lo, hi) range")
        k = len(self.walk_channel_weights)
        if len(self.walk_harmonic_weights) != k:
            raise ConfigError("walk weight vectors must have equal length")
        for tpl in self.templates:
            if len(tpl.channel_weights) != k:
                raise ConfigError(f"template {tpl.name!r} must span all {k} channels")
            if tpl.duration_s[0] <= 0 or tpl.duration_s[1] < tpl.duration_s[0]:
                raise ConfigError(f"template {tpl.name!r}: bad duration range")

    def label_specs(self) -> tuple[LabelSpec, ...]:
        return (LabelSpec("walk_sit", 2, null_class=0),
                LabelSpec("gesture", len(self.templates) + 1, null_class=0))

    def class_names(self) -> tuple[tuple[str, ...], ...]:
        return (("sit", "walk"),
                ("none",) + tuple(t.name for t in self.templates))


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Deterministic dataset of labeled interference recordings."""
    config.validate()
    root = SeededRng(config.seed)
    sequences = [_generate_sequence(config, root.split(f"synth.seq.{i}"), i)
                 for i in range(config.num_sequences)]
    ds = Dataset(sequences=sequences, labels=config.label_specs(),
                 channel_names=DEFAULT_CHANNELS[:len(config.walk_channel_weights)],
                 class_names=config.class_names())
    ds.validate()
    return ds


def _generate_sequence(cfg: SynthConfig, rng: SeededRng, index: int) -> SampleSequence:
    rate = cfg.sample_rate_hz
    T = int(round(cfg.duration_s * rate))
    K = len(cfg.walk_channel_weights)
    x = np.zeros((K, T))
    y = np.zeros((2, T), dtype=np.int64)

    # walk/sit segmentation covering the whole sequence
    walking = bool(rng.uniform() < 0.5)
    t = 0
    while t < T:
        dur = rng.uniform((), *cfg.walk_segment_s)
        n = min(T - t, max(1, int(round(dur * rate))))
        if walking:
            y[0, t:t + n] = 1
            phase = 2.0 * math.pi * cfg.phase_jitter * rng.uniform()
            tt = np.arange(t, t + n) / rate
            base = np.sin(2.0 * math.pi * cfg.walk_freq_hz * tt + phase)
            harm = np.sin(4.0 * math.pi * cfg.walk_freq_hz * tt + 2.0 * phase)
            for c in range(K):
                x[c, t:t + n] += cfg.walk_amplitude * (
                    cfg.walk_channel_weights[c] * base
                    + cfg.walk_harmonic_weights[c] * harm)
        else:
            walking_phase = rng.uniform()  # keep draw parity between states
        walking = not walking
        t += n

    # gesture events: classes, durations, then uniform non-overlap placement
    n_events = cfg.gestures_per_sequence
    n_classes = len(cfg.templates)
    class_ids = 1 + rng.integers(n_classes, n_events)
    lengths = []
    for cid in class_ids:
        lo, hi = cfg.templates[cid - 1].duration_s
        lengths.append(max(2, int(round(rng.uniform((), lo, hi) * rate))))
    gap = int(round(cfg.min_gap_s * rate))
    slack = T - sum(lengths) - gap * (n_events - 1)
    if slack < 0:
        raise ConfigError(
            f"{n_events} gestures cannot fit in {T} samples (short by {-slack})")
    offsets = np.sort(rng.uniform(n_events)) * slack
    cursor = 0
    for i, (cid, length) in enumerate(zip(class_ids, lengths)):
        start = int(offsets[i]) + cursor
        tpl = cfg.templates[cid - 1]
        phase = np.arange(length) + 0.5
        pulse = np.sin(tpl.humps * math.pi * phase / length)
        for c in range(K):
            if tpl.channel_weights[c]:
                x[c, start:start + length] += (
                    cfg.gesture_amplitude * tpl.channel_weights[c] * pulse)
        y[1, start:start + length] = cid
        cursor += length + gap

    if cfg.noise_std > 0:
        x += rng.normal((K, T), std=cfg.noise_std)
    return SampleSequence(id=f"synth{index:03d}", x=x, y=y, sample_rate_hz=rate)


# ---------------------------------------------------------------------------
# windowing / normalization / splitting


@dataclass
class Window:
    seq_id: str
    start: int
    x: np.ndarray  # K,L
    y: np.ndarray  # H,L
    valid: int     # samples before zero padding begins


def window(dataset: Dataset, length: int, stride: int,
           pad_policy: str = "drop") -> list[Window]:
    """Sliding windows over every sequence.

    pad_policy "drop" discards a tail shorter than `length`; "zero" emits
    one extra window with zero-padded signal, null labels in the padding,
    and `valid` marking the boundary.
    """
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if pad_policy not in ("drop", "zero"):
        raise ConfigError(f"unknown pad_policy {pad_policy!r}")
    nulls = np.array([spec.null_class for spec in dataset.labels], dtype=np.int64)
    out = []
    for seq in dataset.sequences:
        T = seq.length
        starts = list(range(0, T - length + 1, stride))
        covered = starts[-1] + length if starts else 0
        for s in starts:
            out.append(Window(seq.id, s, seq.x[:, s:s + length],
                              seq.y[:, s:s + length], length))
        if pad_policy == "zero" and covered < T:
            s = starts[-1] + stride if starts else 0
            valid = T - s
            xw = np.zeros((seq.x.shape[0], length))
            xw[:, :valid] = seq.x[:, s:]
            yw = np.repeat(nulls[:, None], length, axis=1)
            yw[:, :valid] = seq.y[:, s:]
            out.append(Window(seq.id, s, xw, yw, valid))
    return out


@dataclass
class Normalizer:
    """Per-channel affine transform fitted on the training split only."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, dataset: Dataset) -> Dataset:
        if dataset.normalized:
            raise DataError("dataset is already normalized")
        seqs = [SampleSequence(s.id, (s.x - self.mean[:, None]) / self.scale[:, None],
                               s.y.copy(), s.sample_rate_hz)
                for s in dataset.sequences]
        return Dataset(seqs, dataset.labels, dataset.channel_names,
                       dataset.class_names, normalized=True)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["scale"], dtype=np.float64))


def fit_normalizer(train_split: Dataset) -> Normalizer:
    """Mean 0 / std 1 per channel on the given split; degenerate channels keep scale 1."""
    if not train_split.sequences:
        raise DataError("cannot fit a normalizer on an empty split")
    stacked = np.concatenate([s.x for s in train_split.sequences], axis=1)
    mean = stacked.mean(axis=1)
    std = stacked.std(axis=1)
    scale = np.where(std > 0, std, 1.0)
    return Normalizer(mean=mean, scale=scale)


def split(dataset: Dataset, train_frac: float, seed: int) -> tuple[Dataset, Dataset]:
    """Whole-sequence train/test split, deterministic per seed."""
    if not 0 < train_frac < 1:
        raise ConfigError(f"train_frac must be in (0,1), got {train_frac}")
    n = len(dataset.sequences)
    if n < 2:
        raise DataError(f"need at least 2 sequences to split, got {n}")
    perm = SeededRng(seed).split("split").permutation(n)
    n_train = min(max(int(train_frac * n), 1), n - 1)
    pick = lambda idx: Dataset([dataset.sequences[i] for i in idx], dataset.labels,
                               dataset.channel_names, dataset.class_names,
                               dataset.normalized)
    return pick(sorted(perm[:n_train])), pick(sorted(perm[n_train:]))


# ---------------------------------------------------------------------------
# CSV + sidecar metadata round trip


def _fmt(v: float) -> str:
    # repr gives the shortest decimal that round-trips exactly (<= 17 digits)
    return repr(float(v))


def save_dataset(dataset: Dataset, out_dir) -> tuple[Path, Path]:
    """Write `data.csv` and `meta.json` into a directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "data.csv"
    meta_path = out_dir / "meta.json"
    K, H = dataset.num_channels, len(dataset.labels)
    header = (["seq_id", "t"] + [f"ch_{c}" for c in range(K)]
              + [f"label_{h}" for h in range(H)])
    lines = [",".join(header)]
    for seq in dataset.sequences:
        for t in range(seq.length):
            row = [seq.id, str(t)]
            row += [_fmt(seq.x[c, t]) for c in range(K)]
            row += [str(int(seq.y[h, t])) for h in range(H)]
            lines.append(",".join(row))
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    rate = dataset.sequences[0].sample_rate_hz if dataset.sequences else 0.0
    meta = {
        "sample_rate_hz": rate,
        "channels": list(dataset.channel_names),
        "labels": [
            {"name": spec.name, "num_classes": spec.num_classes,
             "null_class": spec.null_class,
             "classes": list(dataset.class_names[h]) if dataset.class_names else []}
            for h, spec in enumerate(dataset.labels)
        ],
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8", newline="\n")
    return csv_path, meta_path


def _resolve_paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.is_dir():
        return path / "data.csv", path / "meta.json"
    return path, path.parent / "meta.json"


def load_dataset(path) -> Dataset:
    """Read a dataset directory (or data.csv path with sibling meta.json)."""
    csv_path, meta_path = _resolve_paths(path)
    if not csv_path.exists():
        raise DataError(f"no such data file: {csv_path}")
    if not meta_path.exists():
        raise DataError(f"missing sidecar metadata: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    specs = tuple(LabelSpec(d["name"], d["num_classes"], d.get("null_class", 0))
                  for d in meta["labels"])
    class_names = tuple(tuple(d.get("classes", [])) for d in meta["labels"])
    channels = tuple(meta["channels"])
    K, H = len(channels), len(specs)

    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("line 1: empty file") from None
        expected = (["seq_id", "t"] + [f"ch_{c}" for c in range(K)]
                    + [f"label_{h}" for h in range(H)])
        if header != expected:
            raise ParseError(f"line 1: header {header} does not match schema {expected}")
        sequences: list[SampleSequence] = []
        cur_id, xs, ys = None, [], []
        seen: set[str] = set()

        def flush():
            if cur_id is None:
                return
            x = np.array(xs, dtype=np.float64).T
            y = np.array(ys, dtype=np.int64).T
            sequences.append(SampleSequence(cur_id, x, y, meta["sample_rate_hz"]))

        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2 + K + H:
                raise ParseError(f"line {lineno}: expected {2 + K + H} fields, got {len(row)}")
            sid = row[0]
            if sid != cur_id:
                if sid in seen:
                    raise ParseError(f"line {lineno}: rows for {sid!r} are not contiguous")
                flush()
                cur_id, xs, ys = sid, [], []
                seen.add(sid)
            try:
                t = int(row[1])
            except ValueError:
                raise ParseError(f"line {lineno}: non-integer sample index {row[1]!r}") from None
            if t != len(xs):
                raise ParseError(f"line {lineno}: sample index {t}, expected {len(xs)}")
            try:
                xs.append([float(v) for v in row[2:2 + K]])
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric channel value") from None
            labels = []
            for h in range(H):
                raw = row[2 + K + h]
                try:
                    v = int(raw)
                except ValueError:
                    raise ParseError(f"line {lineno}: non-integer label {raw!r}") from None
                if not 0 <= v < specs[h].num_classes:
                    raise ParseError(
                        f"line {lineno}: label_{h} id {v} outside "
                        f"[0,{specs[h].num_classes})")
                labels.append(v)
            ys.append(labels)
        flush()
    if not sequences:
        raise DataError(f"{csv_path} holds no samples")
    ds = Dataset(sequences, specs, channels, class_names)
    ds.validate()
    return ds
