"""Dense per-label evaluation: accuracy, macro-F1, confusion matrices.

Macro-F1 is the unweighted mean of per-class F1; classes with neither true
nor predicted instances are excluded from the mean rather than scored
zero.  Confusion matrices are reported as counts and as row-normalized
rates (rows = ground truth), in which form the diagonal is per-class
recall.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .chain import predict_dense
from .errors import ContractError, LabelError


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ContractError(f"accuracy needs equal non-empty arrays, got "
                            f"{pred.shape} vs {truth.shape}")
    return float(np.mean(pred == truth))


def _counts(pred, truth, num_classes) -> np.ndarray:
    pred, truth = np.asarray(pred).ravel(), np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ContractError("prediction and truth lengths differ")
    for arr, nm in ((pred, "pred"), (truth, "truth")):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise LabelError(f"{nm} ids outside [0,{num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    return counts


def per_class_scores(pred, truth, num_classes) -> list[dict]:
    """Precision/recall/F1/support per class (zero denominators score 0)."""
    counts = _counts(pred, truth, num_classes)
    scores = []
    for c in range(num_classes):
        tp = counts[c, c]
        pred_c = counts[:, c].sum()
        true_c = counts[c, :].sum()
        precision = tp / pred_c if pred_c else 0.0
        recall = tp / true_c if true_c else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append({"class": c, "precision": float(precision),
                       "recall": float(recall), "f1": float(f1),
                       "support": int(true_c), "predicted": int(pred_c)})
    return scores


def macro_f1(pred, truth, num_classes) -> float:
    scores = per_class_scores(pred, truth, num_classes)
    live = [s["f1"] for s in scores if s["support"] or s["predicted"]]
    if not live:
        raise ContractError("macro_f1 over zero live classes")
    return float(np.mean(live))


@dataclass
class ConfusionMatrix:
    label: str
    counts: np.ndarray

    @classmethod
    def build(cls, pred, truth, num_classes, label="") -> "ConfusionMatrix":
        return cls(label=label, counts=_counts(pred, truth, num_classes))

    @property
    def normalized(self) -> np.ndarray:
        """Row-normalized rates; rows without support stay all-zero."""
        sums = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, sums, where=sums > 0,
                         out=np.zeros(self.counts.shape, dtype=np.float64))

    @property
    def zero_support_rows(self) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.counts.sum(axis=1) == 0)]


def confusion(pred, truth, num_classes, label="") -> ConfusionMatrix:
    return ConfusionMatrix.build(pred, truth, num_classes, label)


@dataclass
class MetricsReport:
    per_label: list[dict]
    num_samples: int
    config_digest: str | None = None
    seed: int | None = None
    confusions: list[ConfusionMatrix] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "labels": self.per_label,
            "num_samples": self.num_samples,
            "config_digest": self.config_digest,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _label_row_map(model, dataset) -> list[int]:
    """For each dataset label row, the chain position predicting it."""
    model_names = [spec.name for spec in model.label_specs]
    dataset_specs = {spec.name: spec.num_classes for spec in dataset.labels}
    if sorted(model_names) != sorted(dataset_specs) or any(
            spec.num_classes != dataset_specs[spec.name] for spec in model.label_specs):
        raise ContractError("model and dataset label specs disagree")
    return [model_names.index(spec.name) for spec in dataset.labels]


def predict_dataset(model, dataset, window_length: int = 64,
                    stride: int = 32) -> dict[str, np.ndarray]:
    """Dense [H,T] predictions per sequence id, rows in dataset label order.

    Sequences are covered with overlapping windows; where windows overlap,
    each time step keeps the prediction from the window whose center is
    nearest (ties to the earlier window).  Short sequences are zero-padded
    up to the window length and the padding is cut from the output.
    """
    rows = _label_row_map(model, dataset)
    out: dict[str, np.ndarray] = {}
    H = len(model.label_specs)
    for seq in dataset.sequences:
        T = seq.length
        L = window_length
        if T <= L:
            starts = [0]
        else:
            starts = list(range(0, T - L + 1, stride))
            if starts[-1] + L < T:
                starts.append(T - L)
        pred = np.zeros((H, T), dtype=np.int64)
        best = np.full(T, np.inf)
        center_off = (L - 1) / 2.0
        for s in starts:
            xw = seq.x[:, s:s + L]
            if xw.shape[1] < L:
                padded = np.zeros((xw.shape[0], L))
                padded[:, :xw.shape[1]] = xw
                xw = padded
            p = predict_dense(model, xw[None])[rows, 0, :]  # H,L in dataset order
            span = min(L, T - s)
            dist = np.abs(np.arange(s, s + span) - (s + center_off))
            better = dist < best[s:s + span]
            pred[:, s:s + span][:, better] = p[:, :span][:, better]
            best[s:s + span] = np.minimum(best[s:s + span], dist)
        out[seq.id] = pred
    return out


def evaluate(model, dataset, window_length: int = 64, stride: int = 32,
             config_digest: str | None = None, seed: int | None = None) -> MetricsReport:
    """Dense metrics per label (dataset order) over every sequence."""
    _label_row_map(model, dataset)  # validates spec agreement
    preds = predict_dataset(model, dataset, window_length, stride)
    per_label, confusions = [], []
    total = 0
    for h, spec in enumerate(dataset.labels):
        p = np.concatenate([preds[s.id][h] for s in dataset.sequences])
        t = np.concatenate([s.y[h] for s in dataset.sequences])
        total = p.size
        cm = confusion(p, t, spec.num_classes, label=spec.name)
        confusions.append(cm)
        per_label.append({
            "name": spec.name,
            "accuracy": accuracy(p, t),
            "macro_f1": macro_f1(p, t, spec.num_classes),
            "per_class": per_class_scores(p, t, spec.num_classes),
            "confusion_counts": cm.counts.tolist(),
            "confusion_normalized": cm.normalized.tolist(),
            "zero_support_rows": cm.zero_support_rows,
        })
    return MetricsReport(per_label=per_label, num_samples=total,
                         config_digest=config_digest, seed=seed,
                         confusions=confusions)
