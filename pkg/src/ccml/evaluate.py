"""Micro and per-class precision/recall/F1, noise-detection scores, report files.

Every ratio with a zero denominator is reported as 0.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import StateError, ValidationError


@dataclass(frozen=True)
class ClassMetrics:
    precision: list
    recall: list
    f1: list
    support: list


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    per_class: ClassMetrics
    detection: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _f1(p, r):
    return _ratio(2.0 * p * r, p + r)


def _check(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise ValidationError(f"prediction {pred.shape} and truth {truth.shape} must be equal 2-d shapes")
    for name, arr in (("predictions", pred), ("truth", truth)):
        if arr.size and not ((arr == 0) | (arr == 1)).all():
            raise ValidationError(f"{name} must be binary (0/1)")
    return pred.astype(bool), truth.astype(bool)


def confusion_counts(pred, truth):
    """Per-class (TP, FP, FN) vectors."""
    pred, truth = _check(pred, truth)
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    return tp, fp, fn


def micro_metrics(pred, truth) -> tuple[float, float, float]:
    tp, fp, fn = (int(c.sum()) for c in confusion_counts(pred, truth))
    p = float(_ratio(tp, tp + fp))
    r = float(_ratio(tp, tp + fn))
    return p, r, float(_f1(p, r))


def per_class_metrics(pred, truth) -> ClassMetrics:
    tp, fp, fn = confusion_counts(pred, truth)
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return ClassMetrics(p.tolist(), r.tolist(), _f1(p, r).tolist(), (tp + fn).astype(int).tolist())


def per_class_f1(pred, truth) -> np.ndarray:
    return np.asarray(per_class_metrics(pred, truth).f1)


def enrichment(excluded_ids, noisy_ids, all_ids) -> float | None:
    """Share of noisy samples among ``excluded_ids`` divided by their share in ``all_ids``.

    ``excluded_ids`` may repeat ids (one entry per exclusion event).
    """
    all_ids = np.asarray(all_ids)
    excluded_ids = np.asarray(excluded_ids)
    if excluded_ids.size == 0 or all_ids.size == 0:
        return None
    noisy = np.isin(all_ids, noisy_ids)
    base = noisy.mean()
    if base == 0:
        return None
    return float(np.isin(excluded_ids, noisy_ids).mean() / base)


def noise_detection_metrics(excluded_ids, flip_records, ids, noise_mask, Y_clean) -> dict:
    """Score swap exclusions and label flips against the injected noise.

    ``excluded_ids``: sample ids excluded by the swap module (repeats allowed).
    ``flip_records``: dicts with ``sample``, ``class`` and ``direction`` keys.
    A flip is correct when it lands on an injected-noise cell and moves the
    label to its clean value.
    """
    if noise_mask is None or Y_clean is None:
        raise StateError("noise detection needs the injected noise mask and clean labels")
    noise_mask = np.asarray(noise_mask)
    Y_clean = np.asarray(Y_clean)
    ids = np.asarray(ids)
    row_of = {int(s): i for i, s in enumerate(ids)}
    noisy_ids = ids[noise_mask.any(axis=1)]

    n_correct = 0
    for rec in flip_records:
        i, j = row_of[int(rec["sample"])], int(rec["class"])
        new_value = 1 if rec["direction"] == "0to1" else 0
        if noise_mask[i, j] and Y_clean[i, j] == new_value:
            n_correct += 1
    n_flips = len(flip_records)
    n_noisy_cells = int(noise_mask.sum())
    return {
        "enrichment": enrichment(excluded_ids, noisy_ids, ids),
        "n_excluded": int(np.asarray(excluded_ids).size),
        "noisy_sample_rate": float(noise_mask.any(axis=1).mean()) if ids.size else 0.0,
        "n_flips": n_flips,
        "n_correct_flips": n_correct,
        "flip_precision": n_correct / n_flips if n_flips else None,
        "flip_recall": n_correct / n_noisy_cells if n_flips and n_noisy_cells else None,
    }


def evaluate(probabilities, truth, threshold: float = 0.5, detection: dict | None = None) -> MetricsReport:
    pred = (np.asarray(probabilities) >= threshold).astype(np.int8)
    p, r, f1 = micro_metrics(pred, truth)
    return MetricsReport(p, r, f1, per_class_metrics(pred, truth), detection)


def write_predictions(path, ids, probabilities, threshold: float = 0.5) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    probs = np.asarray(probabilities, dtype=np.float64)
    v = probs.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"p_{j}" for j in range(v)] + [f"yhat_{j}" for j in range(v)])
        for sid, row in zip(ids, probs):
            writer.writerow(
                [str(int(sid))] + [repr(float(x)) for x in row] + [str(int(x >= threshold)) for x in row]
            )
    return path


def read_predictions(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(ids, probabilities, predicted labels)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty predictions file")
    v = sum(1 for name in rows[0] if name.startswith("p_"))
    ids = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
    probs = np.array([[float(x) for x in r[1:1 + v]] for r in rows[1:]]).reshape(-1, v)
    yhat = np.array([[int(x) for x in r[1 + v:1 + 2 * v]] for r in rows[1:]], dtype=np.int8).reshape(-1, v)
    return ids, probs, yhat


def write_report(path, report: MetricsReport, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
