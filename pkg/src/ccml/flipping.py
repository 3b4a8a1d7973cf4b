"""Label correction: cells both networks confidently contradict get flipped.

Selection keeps cells where the two networks' thresholded predictions agree
with each other and disagree with the current label, scores each by the sum
of both networks' group-lasso class scores, and the flipper toggles the top
``ceil(flip_rate * n_candidates)`` of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import grouplasso
from .bce import bce
from .errors import ValidationError


@dataclass(frozen=True)
class FlipCandidate:
    row: int  # row within the batch
    sample: int  # dataset sample id
    cls: int
    score: float
    direction: str  # "0to1" fixes a missing label, "1to0" a wrong one


@dataclass
class FlipLog:
    epoch: int | None
    batch: int | None
    flipped: list = field(default_factory=list)
    budget: int = 0
    n_candidates: int = 0

    def records(self) -> list[dict]:
        return [
            {
                "epoch": self.epoch,
                "batch": self.batch,
                "sample": c.sample,
                "class": c.cls,
                "direction": c.direction,
                "score": c.score,
            }
            for c in self.flipped
        ]


@dataclass(frozen=True)
class Recomputed:
    bce_f: np.ndarray
    bce_g: np.ndarray
    lasso_f: grouplasso.LassoReport
    lasso_g: grouplasso.LassoReport


def select_candidates(
    probs_f,
    probs_g,
    labels,
    lasso_scores_f,
    lasso_scores_g,
    threshold: float = 0.5,
    sample_ids=None,
    locked=None,
) -> list[FlipCandidate]:
    """Cells where both networks agree on a prediction that contradicts the label.

    ``locked`` masks cells that may not be flipped again (earlier corrections).
    """
    arrays = [np.asarray(a) for a in (probs_f, probs_g, labels, lasso_scores_f, lasso_scores_g)]
    shape = arrays[0].shape
    if len(shape) != 2 or any(a.shape != shape for a in arrays):
        raise ValidationError(f"all inputs must share one 2-d shape, got {[a.shape for a in arrays]}")
    pf, pg, y, sf, sg = arrays
    if y.size and not ((y == 0) | (y == 1)).all():
        raise ValidationError("labels must be binary (0/1)")
    if sample_ids is None:
        sample_ids = np.arange(shape[0])
    pred_f = (pf >= threshold).astype(np.int8)
    pred_g = (pg >= threshold).astype(np.int8)
    combined = sf + sg
    mask = (pred_f == pred_g) & (pred_f != y) & (combined > 0)
    if locked is not None:
        mask &= ~np.asarray(locked, dtype=bool)
    rows, cols = np.nonzero(mask)
    ids = np.asarray(sample_ids)[rows]
    scores = combined[rows, cols]
    # descending score, then ascending (sample id, class)
    order = np.lexsort((cols, ids, -scores))
    return [
        FlipCandidate(
            row=int(rows[k]),
            sample=int(ids[k]),
            cls=int(cols[k]),
            score=float(scores[k]),
            direction="0to1" if y[rows[k], cols[k]] == 0 else "1to0",
        )
        for k in order
    ]


def flip_budget(n_candidates: int, flip_rate: float) -> int:
    return math.ceil(flip_rate * n_candidates) if n_candidates else 0


def flip(labels, candidates, flip_rate: float = 0.05, epoch=None, batch=None):
    """Toggle the top-scoring candidates; returns ``(new_labels, FlipLog)``."""
    if not 0.0 <= flip_rate <= 1.0:
        raise ValidationError(f"flip_rate must lie in [0, 1], got {flip_rate}")
    labels = np.array(labels, dtype=np.int8, copy=True)
    budget = flip_budget(len(candidates), flip_rate)
    chosen = list(candidates[:budget])
    for c in chosen:
        if not (0 <= c.row < labels.shape[0] and 0 <= c.cls < labels.shape[1]):
            raise ValidationError(f"candidate ({c.row}, {c.cls}) outside labels of shape {labels.shape}")
        labels[c.row, c.cls] ^= 1
    return labels, FlipLog(epoch, batch, chosen, budget, len(candidates))


def recompute_after_flip(probs_f, probs_g, labels, alpha: float = 1.0, beta: float = 1.0) -> Recomputed:
    return Recomputed(
        bce_f=bce(probs_f, labels).loss,
        bce_g=bce(probs_g, labels).loss,
        lasso_f=grouplasso.lasso(probs_f, labels, alpha, beta),
        lasso_g=grouplasso.lasso(probs_g, labels, alpha, beta),
    )
