"""Pairwise ranking errors and the group-lasso ranking loss.

For a sample with assigned classes ``a`` and unassigned classes ``b`` the
squared hinge ``eps[c, c_hat] = max(0, 2 (p[c_hat] - p[c]) + 1) ** 2`` is
formed for every ``c in a``, ``c_hat in b``. It is grouped two ways:

* missing term: ``sum over c_hat of sqrt(sum over c of eps)``
* wrong term:   ``sum over c of sqrt(sum over c_hat of eps)``

and the loss is ``alpha * missing + beta * wrong``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class LassoReport:
    missing: np.ndarray  # (n,)
    wrong: np.ndarray  # (n,)
    total: np.ndarray  # (n,)
    class_scores: np.ndarray  # (n, V); group norm each class belongs to
    degenerate: np.ndarray  # (n,) bool; all or no classes assigned


def ranking_error(p_c: float, p_c_hat: float) -> float:
    if not (0.0 <= p_c <= 1.0 and 0.0 <= p_c_hat <= 1.0):
        raise ValidationError(f"ranking error needs probabilities in [0, 1], got {p_c}, {p_c_hat}")
    return max(0.0, 2.0 * (p_c_hat - p_c) + 1.0)


def pair_errors(probabilities, labels) -> np.ndarray:
    """(n, V, V) array; entry [i, c, c_hat] is eps for assigned c, unassigned c_hat, else 0."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    hinge = np.maximum(0.0, 2.0 * (p[:, None, :] - p[:, :, None]) + 1.0)
    pair_mask = (y[:, :, None] == 1) & (y[:, None, :] == 0)
    return np.where(pair_mask, hinge * hinge, 0.0)


def lasso(probabilities, labels, alpha: float = 1.0, beta: float = 1.0) -> LassoReport:
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 2:
        raise ValidationError(f"probabilities {p.shape} and labels {y.shape} must be equal 2-d shapes")
    if y.size and not ((y == 0) | (y == 1)).all():
        raise ValidationError("labels must be binary (0/1)")
    if alpha < 0 or beta < 0:
        raise ValidationError("alpha and beta must be non-negative")
    eps = pair_errors(p, y)
    col = np.sqrt(eps.sum(axis=1))  # per unassigned c_hat
    row = np.sqrt(eps.sum(axis=2))  # per assigned c
    missing = col.sum(axis=1)
    wrong = row.sum(axis=1)
    class_scores = np.where(y == 1, row, col)
    n_assigned = y.sum(axis=1)
    degenerate = (n_assigned == 0) | (n_assigned == y.shape[1])
    return LassoReport(missing, wrong, alpha * missing + beta * wrong, class_scores, degenerate)
