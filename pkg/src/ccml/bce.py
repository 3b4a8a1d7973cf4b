from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

CLAMP = 1e-7


@dataclass(frozen=True)
class BceReport:
    loss: np.ndarray  # per sample, mean over classes
    grad: np.ndarray  # d loss_i / d logit_ij = (p - y) / V


def bce(probabilities, labels) -> BceReport:
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 2:
        raise ValidationError(f"probabilities {p.shape} and labels {y.shape} must be equal 2-d shapes")
    if y.size and not ((y == 0) | (y == 1)).all():
        raise ValidationError("labels must be binary (0/1)")
    y = y.astype(np.float64)
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    v = p.shape[1]
    terms = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    return BceReport(loss=terms.mean(axis=1), grad=(p - y) / v)
