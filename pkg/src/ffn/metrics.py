"""Confusion matrix and the per-class / fake-subset P, R, F1 reporting scheme.

Degenerate ratios (0/0) are reported as 0.  Macro F1 is the mean of the
per-class F1 values, not the harmonic mean of macro P and macro R.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .labels import DISPLAY_NAMES, FAKE_CLASSES, NUM_CLASSES, Label


def _div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out if out.shape else float(out)


def harmonic(p, r):
    p = np.asarray(p, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    return _div(2 * p * r, p + r)


def confusion_matrix(preds: Sequence, golds: Sequence, n_classes: int = NUM_CLASSES) -> np.ndarray:
    """``cm[g, p]`` counts samples with gold class g predicted as p."""
    preds = np.asarray([int(p) for p in preds], dtype=np.int64)
    golds = np.asarray([int(g) for g in golds], dtype=np.int64)
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} gold labels")
    if len(preds) == 0:
        raise ValueError("confusion_matrix needs at least one sample")
    for name, arr in (("prediction", preds), ("gold", golds)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValueError(f"{name} class index out of range")
    flat = np.bincount(golds * n_classes + preds, minlength=n_classes * n_classes)
    return flat.reshape(n_classes, n_classes)


def per_class_prf(cm: np.ndarray):
    """Per-class precision, recall and F1 arrays."""
    cm = np.asarray(cm)
    tp = np.diag(cm)
    precision = _div(tp, cm.sum(axis=0))
    recall = _div(tp, cm.sum(axis=1))
    return precision, recall, harmonic(precision, recall)


def accuracy(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise ValueError("accuracy of an empty confusion matrix")
    return float(np.trace(cm) / total)


def subset_micro_macro(cm: np.ndarray, subset: Iterable = FAKE_CLASSES) -> dict:
    """Micro and macro P/R/F1 restricted to ``subset`` (default: the five fake classes).

    False positives for a class count every off-diagonal entry of its column,
    including predictions made for gold-True samples.
    """
    cm = np.asarray(cm)
    idx = np.array(sorted(int(c) for c in subset))
    tp = np.diag(cm)[idx]
    fp = cm.sum(axis=0)[idx] - tp
    fn = cm.sum(axis=1)[idx] - tp
    micro_p = _div(tp.sum(), tp.sum() + fp.sum())
    micro_r = _div(tp.sum(), tp.sum() + fn.sum())
    p, r, f = per_class_prf(cm)
    return {
        "micro": {"precision": float(micro_p), "recall": float(micro_r),
                  "f1": float(harmonic(micro_p, micro_r))},
        "macro": {"precision": float(p[idx].mean()), "recall": float(r[idx].mean()),
                  "f1": float(f[idx].mean())},
    }


@dataclass
class MetricsReport:
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float
    micro: dict
    macro: dict
    loss: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_confusion(cls, cm, loss=None, subset=FAKE_CLASSES, **meta) -> "MetricsReport":
        cm = np.asarray(cm, dtype=np.int64)
        p, r, f = per_class_prf(cm)
        avg = subset_micro_macro(cm, subset)
        return cls(cm, p, r, f, accuracy(cm), avg["micro"], avg["macro"], loss, dict(meta))

    @classmethod
    def from_predictions(cls, preds, golds, loss=None, **meta) -> "MetricsReport":
        return cls.from_confusion(confusion_matrix(preds, golds), loss, **meta)

    def to_dict(self) -> dict:
        return {
            "per_class": {
                lab.name: {"precision": float(self.precision[lab]), "recall": float(self.recall[lab]),
                           "f1": float(self.f1[lab]), "support": int(self.confusion[lab].sum())}
                for lab in Label
            },
            "micro_fake": self.micro,
            "macro_fake": self.macro,
            "accuracy": self.accuracy,
            "loss": self.loss,
            "confusion_matrix": self.confusion.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        labels = list(Label)
        per = d["per_class"]
        return cls(
            np.asarray(d["confusion_matrix"], dtype=np.int64),
            np.array([per[l.name]["precision"] for l in labels]),
            np.array([per[l.name]["recall"] for l in labels]),
            np.array([per[l.name]["f1"] for l in labels]),
            d["accuracy"], d["micro_fake"], d["macro_fake"], d.get("loss"), d.get("meta", {}),
        )

    def to_table(self) -> str:
        width = max(len(n) for n in DISPLAY_NAMES.values()) + 2
        lines = [f"{'Class':<{width}}{'P':>7}{'R':>7}{'F1':>7}", "-" * (width + 21)]
        for lab in Label:
            lines.append(f"{lab.display:<{width}}{self.precision[lab]:>7.2f}"
                         f"{self.recall[lab]:>7.2f}{self.f1[lab]:>7.2f}")
        lines.append("-" * (width + 21))
        for name, row in (("micro-average", self.micro), ("macro-average", self.macro)):
            lines.append(f"{name:<{width}}{row['precision']:>7.2f}{row['recall']:>7.2f}{row['f1']:>7.2f}")
        lines.append("-" * (width + 21))
        lines.append(f"{'accuracy':<{width}}{self.accuracy:>14.2f}")
        if self.loss is not None:
            lines.append(f"{'mean NLL':<{width}}{self.loss:>14.4f}")
        return "\n".join(lines) + "\n"

    def save(self, out_dir, stem="report"):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.txt").write_text(self.to_table(), encoding="utf-8")
        (out_dir / f"{stem}.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
        return out_dir / f"{stem}.txt", out_dir / f"{stem}.json"
