"""Experiment configuration and the workflows behind the CLI commands.

A run is described by one JSON document; `resolve_config` fills every
default so the emitted `config.resolved.json` reproduces the run exactly.
All randomness flows from the single root seed, split into named streams
(init, gumbel, shuffle, synth, split).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .chain import (ChainConfig, LabelSpec, TrainOptions, build_baseline,
                    build_chain, train)
from .conditioning import GeneratorMode, TemperatureSchedule
from .data import (Dataset, GestureTemplate, Normalizer, SynthConfig,
                   default_gesture_templates, fit_normalizer, generate_synthetic,
                   load_dataset, save_dataset, split)
from .engine import SeededRng
from .errors import ConfigError
from .metrics import evaluate, predict_dataset


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# config schema


def template_to_dict(t: GestureTemplate) -> dict:
    return {"name": t.name, "channel_weights": list(t.channel_weights),
            "duration_s": list(t.duration_s), "humps": t.humps}


def template_from_dict(d: dict) -> GestureTemplate:
    return GestureTemplate(d["name"], tuple(d["channel_weights"]),
                           tuple(d["duration_s"]), d.get("humps", 1))


def synth_config_to_dict(c: SynthConfig) -> dict:
    return {
        "seed": c.seed, "num_sequences": c.num_sequences,
        "duration_s": c.duration_s, "sample_rate_hz": c.sample_rate_hz,
        "walk_freq_hz": c.walk_freq_hz, "walk_amplitude": c.walk_amplitude,
        "gesture_amplitude": c.gesture_amplitude,
        "walk_segment_s": list(c.walk_segment_s), "phase_jitter": c.phase_jitter,
        "walk_channel_weights": list(c.walk_channel_weights),
        "walk_harmonic_weights": list(c.walk_harmonic_weights),
        "gestures_per_sequence": c.gestures_per_sequence,
        "min_gap_s": c.min_gap_s, "noise_std": c.noise_std,
        "templates": [template_to_dict(t) for t in c.templates],
    }


def synth_config_from_dict(d: dict, default_seed: int = 0) -> SynthConfig:
    base = SynthConfig(seed=default_seed)
    templates = (tuple(template_from_dict(t) for t in d["templates"])
                 if "templates" in d else default_gesture_templates())
    kwargs = {}
    for name in ("seed", "num_sequences", "duration_s", "sample_rate_hz",
                 "walk_freq_hz", "walk_amplitude", "gesture_amplitude",
                 "phase_jitter", "gestures_per_sequence", "min_gap_s",
                 "noise_std"):
        kwargs[name] = d.get(name, getattr(base, name))
    for name in ("walk_segment_s", "walk_channel_weights", "walk_harmonic_weights"):
        kwargs[name] = tuple(d.get(name, getattr(base, name)))
    cfg = SynthConfig(templates=templates, **kwargs)
    cfg.validate()
    return cfg


_DEFAULTS = {
    "seed": 0,
    "label_order": ["walk_sit", "gesture"],
    "unet": {"depth": 3, "base_channels": 16, "kernel_size": 3},
    "generator": {"variant": "gumbel_max", "act": "tanh",
                  "schedule": {"tau0": 1.0, "decay_rate": 0.01, "tau_min": 0.5},
                  "stochastic_inference": False},
    "teacher_forcing": False,
    "embed_dims": None,
    "train": {"epochs": 30, "batch_size": 8, "lr": 1e-3, "beta1": 0.9,
              "beta2": 0.999, "eps": 1e-8, "window_length": 64,
              "window_stride": 32, "checkpoint_every": 0},
    "split": {"train_frac": 0.8},
    "normalize": True,
    "compare": {"weak_label": None},
}


def resolve_config(raw: dict) -> dict:
    """Fill every default; the result fully reproduces the run."""
    if "data" not in raw or not isinstance(raw["data"], dict):
        raise ConfigError("config needs a 'data' object ({'synth': ...} or {'csv': path})")
    sources = [k for k in ("synth", "csv") if k in raw["data"]]
    if len(sources) != 1:
        raise ConfigError("config data must name exactly one of 'synth' or 'csv'")
    out = json.loads(json.dumps(_DEFAULTS))  # deep copy
    out["seed"] = raw.get("seed", 0)
    for key in ("label_order", "teacher_forcing", "embed_dims", "normalize"):
        if key in raw:
            out[key] = raw[key]
    for key in ("unet", "train", "split", "compare"):
        if key in raw:
            unknown = set(raw[key]) - set(out[key])
            if unknown:
                raise ConfigError(f"unknown {key} option(s): {sorted(unknown)}")
            out[key].update(raw[key])
    if "generator" in raw:
        gen = raw["generator"]
        unknown = set(gen) - set(out["generator"])
        if unknown:
            raise ConfigError(f"unknown generator option(s): {sorted(unknown)}")
        sched = gen.pop("schedule", None) if isinstance(gen.get("schedule"), dict) else None
        out["generator"].update({k: v for k, v in gen.items() if k != "schedule"})
        if sched:
            out["generator"]["schedule"].update(sched)
    if sources[0] == "csv":
        out["data"] = {"csv": raw["data"]["csv"]}
    else:
        synth = synth_config_from_dict(raw["data"]["synth"] or {},
                                       default_seed=out["seed"])
        out["data"] = {"synth": synth_config_to_dict(synth)}
    return out


def load_config_file(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return resolve_config(raw)


def config_digest(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def write_resolved(resolved: dict, out_dir: Path) -> None:
    text = json.dumps(resolved, indent=2, sort_keys=True) + "\n"
    (out_dir / "config.resolved.json").write_text(text, encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# builders


def build_input_dataset(resolved: dict) -> Dataset:
    if "csv" in resolved["data"]:
        return load_dataset(resolved["data"]["csv"])
    return generate_synthetic(synth_config_from_dict(resolved["data"]["synth"]))


def generator_mode(resolved: dict) -> GeneratorMode:
    g = resolved["generator"]
    mode = GeneratorMode(
        variant=g["variant"], act=g["act"],
        schedule=TemperatureSchedule(**g["schedule"]),
        stochastic_inference=g["stochastic_inference"])
    mode.validate()
    return mode


def chain_config(resolved: dict, dataset: Dataset,
                 order: list[str] | None = None) -> ChainConfig:
    order = order if order is not None else resolved["label_order"]
    by_name = {spec.name: spec for spec in dataset.labels}
    missing = [n for n in order if n not in by_name]
    if missing:
        raise ConfigError(f"label_order names {missing} not present in the dataset "
                          f"(has {sorted(by_name)})")
    if len(set(order)) != len(dataset.labels):
        raise ConfigError("label_order must list every dataset label exactly once")
    labels = tuple(by_name[n] for n in order)
    embed_dims = resolved["embed_dims"]
    cfg = ChainConfig(
        labels=labels,
        in_channels=dataset.num_channels,
        depth=resolved["unet"]["depth"],
        base_channels=resolved["unet"]["base_channels"],
        kernel_size=resolved["unet"]["kernel_size"],
        generator=generator_mode(resolved),
        teacher_forcing=resolved["teacher_forcing"],
        embed_dims=tuple(embed_dims) if embed_dims else None,
    )
    cfg.validate()
    return cfg


def train_options(resolved: dict, seed: int | None = None) -> TrainOptions:
    t = resolved["train"]
    opts = TrainOptions(
        epochs=t["epochs"], batch_size=t["batch_size"], lr=t["lr"],
        beta1=t["beta1"], beta2=t["beta2"], eps=t["eps"],
        seed=resolved["seed"] if seed is None else seed,
        schedule=TemperatureSchedule(**resolved["generator"]["schedule"]),
        window_length=t["window_length"], window_stride=t["window_stride"],
        checkpoint_every=t["checkpoint_every"])
    opts.validate()
    return opts


# ---------------------------------------------------------------------------
# workflows


def run_synth(resolved: dict, out_dir: Path) -> str:
    if "synth" not in resolved["data"]:
        raise ConfigError("synth command needs a config with data.synth")
    cfg = synth_config_from_dict(resolved["data"]["synth"])
    ds = generate_synthetic(cfg)
    save_dataset(ds, out_dir)
    write_resolved(resolved, out_dir)
    total = sum(s.length for s in ds.sequences)
    lines = [f"wrote {len(ds.sequences)} sequences "
             f"({total} samples, {ds.num_channels} channels) to {out_dir}"]
    for h, spec in enumerate(ds.labels):
        hist = np.zeros(spec.num_classes, dtype=np.int64)
        for s in ds.sequences:
            hist += np.bincount(s.y[h], minlength=spec.num_classes)
        names = ds.class_names[h] if ds.class_names else range(spec.num_classes)
        parts = ", ".join(f"{n}={c}" for n, c in zip(names, hist))
        lines.append(f"label {spec.name} ({spec.num_classes} classes): {parts}")
    return "\n".join(lines)


def _prepare_splits(resolved: dict, dataset: Dataset):
    train_ds, test_ds = split(dataset, resolved["split"]["train_frac"], resolved["seed"])
    normalizer = None
    if resolved["normalize"]:
        normalizer = fit_normalizer(train_ds)
        train_ds = normalizer.apply(train_ds)
        test_ds = normalizer.apply(test_ds)
    return train_ds, test_ds, normalizer


def write_history_csv(history, labels, path: Path) -> None:
    names = [spec.name for spec in labels]
    header = ["epoch", "loss", "tau"]
    header += [f"val_acc_{n}" for n in names] + [f"val_f1_{n}" for n in names]
    lines = [",".join(header)]
    for row in history:
        cells = [str(row.epoch), _fmt(row.loss), _fmt(row.tau)]
        cells += [_fmt(row.accuracy[n]) for n in names]
        cells += [_fmt(row.macro_f1[n]) for n in names]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def run_train(resolved: dict, out_dir: Path, baseline: bool = False) -> str:
    dataset = build_input_dataset(resolved)
    train_ds, test_ds, normalizer = _prepare_splits(resolved, dataset)
    cfg = chain_config(resolved, dataset)
    init_rng = SeededRng(resolved["seed"]).split("init")
    model = build_baseline(cfg, init_rng) if baseline else build_chain(cfg, init_rng)
    opts = train_options(resolved)
    history = train(model, train_ds, opts, val_dataset=test_ds)
    ckpt.save_checkpoint(out_dir / "checkpoint.dh", model, normalizer)
    write_history_csv(history, cfg.labels, out_dir / "history.csv")
    write_resolved(resolved, out_dir)
    last = history[-1]
    kind = "baseline" if baseline else "chain"
    stats = ", ".join(f"{spec.name}: acc={last.accuracy[spec.name]:.4f} "
                      f"f1={last.macro_f1[spec.name]:.4f}" for spec in cfg.labels)
    return (f"trained {kind} for {opts.epochs} epochs "
            f"(final loss {last.loss:.4f}); validation {stats}")


def write_metrics_files(report, dataset, preds, out_dir: Path) -> None:
    (out_dir / "metrics.json").write_text(report.to_json(), encoding="utf-8",
                                          newline="\n")
    for h, entry in enumerate(report.per_label):
        cm = report.confusions[h]
        names = (list(dataset.class_names[h]) if dataset.class_names
                 else [str(c) for c in range(cm.counts.shape[0])])
        lines = [",".join(["truth_class"] + names)]
        norm = cm.normalized
        for c, row_name in enumerate(names):
            lines.append(",".join([row_name] + [_fmt(v) for v in norm[c]]))
        path = out_dir / f"confusion_{entry['name']}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    label_names = [spec.name for spec in dataset.labels]
    header = ["seq_id", "t"]
    for n in label_names:
        header += [f"truth_{n}", f"pred_{n}"]
    lines = [",".join(header)]
    for seq in dataset.sequences:
        p = preds[seq.id]
        for t in range(seq.length):
            cells = [seq.id, str(t)]
            for h in range(len(label_names)):
                cells += [str(int(seq.y[h, t])), str(int(p[h, t]))]
            lines.append(",".join(cells))
    (out_dir / "predictions.csv").write_text("\n".join(lines) + "\n",
                                             encoding="utf-8", newline="\n")


def run_eval(checkpoint_path, data_path, out_dir: Path,
             window_length: int = 64, stride: int = 32) -> str:
    model, normalizer = ckpt.load_checkpoint(checkpoint_path)
    dataset = load_dataset(data_path)
    if normalizer is not None:
        dataset = normalizer.apply(dataset)
    preds = predict_dataset(model, dataset, window_length, stride)
    report = evaluate(model, dataset, window_length, stride)
    write_metrics_files(report, dataset, preds, out_dir)
    stats = ", ".join(f"{e['name']}: acc={e['accuracy']:.4f} "
                      f"f1={e['macro_f1']:.4f}" for e in report.per_label)
    return f"evaluated {len(dataset.sequences)} sequences; {stats}"


def run_compare(resolved: dict, seeds: int, out_dir: Path) -> str:
    """Baseline vs both chain orders on fresh synthetic data per seed."""
    if "synth" not in resolved["data"]:
        raise ConfigError("compare needs a synthetic data source")
    if seeds < 1:
        raise ConfigError(f"need at least 1 seed, got {seeds}")
    order = resolved["label_order"]
    orders = {
        f"chain:{'>'.join(order)}": list(order),
        f"chain:{'>'.join(reversed(order))}": list(reversed(order)),
    }
    weak = resolved["compare"]["weak_label"] or order[-1]
    base_seed = resolved["seed"]

    rows = []  # (seed, model, label, metric, value)
    scores: dict[tuple[str, str, str], list[float]] = {}
    for i in range(seeds):
        seed = base_seed + i
        cell = json.loads(json.dumps(resolved))
        cell["seed"] = seed
        cell["data"]["synth"]["seed"] = seed
        dataset = build_input_dataset(cell)
        train_ds, test_ds, _ = _prepare_splits(cell, dataset)
        opts = train_options(cell)
        models = {"baseline": (None, True)}
        models.update({name: (o, False) for name, o in orders.items()})
        for name, (model_order, is_baseline) in models.items():
            cfg = chain_config(cell, dataset, order=model_order or order)
            rng = SeededRng(seed).split("init")
            model = (build_baseline(cfg, rng) if is_baseline
                     else build_chain(cfg, rng))
            train(model, train_ds, opts, val_dataset=test_ds)
            report = evaluate(model, test_ds, opts.window_length, opts.window_stride)
            for entry in report.per_label:
                for metric in ("accuracy", "macro_f1"):
                    rows.append((seed, name, entry["name"], metric, entry[metric]))
                    scores.setdefault((name, entry["name"], metric), []).append(
                        entry[metric])

    lines = ["seed,model,label,metric,value"]
    lines += [f"{s},{m},{l},{k},{_fmt(v)}" for s, m, l, k, v in rows]
    (out_dir / "comparison.csv").write_text("\n".join(lines) + "\n",
                                            encoding="utf-8", newline="\n")

    chain_fwd = next(iter(orders))
    baseline_f1 = scores[("baseline", weak, "macro_f1")]
    chain_f1 = scores[(chain_fwd, weak, "macro_f1")]
    deltas = [c - b for c, b in zip(chain_f1, baseline_f1)]
    summary = {
        "seeds": [base_seed + i for i in range(seeds)],
        "weak_label": weak,
        "models": sorted({m for _, m, _, _, _ in rows}),
        "means": {
            m: {l: {k: float(np.mean(scores[(m, l, k)]))
                    for k in ("accuracy", "macro_f1")}
                for l in order}
            for m in sorted({mm for _, mm, _, _, _ in rows})
        },
        "weak_label_f1_delta": {
            "chain_model": chain_fwd,
            "per_seed": deltas,
            "mean": float(np.mean(deltas)),
            "positive_seeds": int(sum(d > 0 for d in deltas)),
        },
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n",
        encoding="utf-8", newline="\n")
    write_resolved(resolved, out_dir)
    return (f"compared {len(orders) + 1} models over {seeds} seeds; "
            f"mean weak-label ({weak}) F1 delta "
            f"{summary['weak_label_f1_delta']['mean']:+.4f} "
            f"({summary['weak_label_f1_delta']['positive_seeds']}/{seeds} positive)")
