from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class SwapDecision:
    selected_for_f: np.ndarray  # chosen by g's swapping loss
    selected_for_g: np.ndarray  # chosen by f's swapping loss
    excluded_for_f: np.ndarray
    excluded_for_g: np.ndarray
    R: int


def swapping_loss(bce_loss, lasso_total, gamma: float = 1.0) -> np.ndarray:
    bce_loss = np.asarray(bce_loss, dtype=np.float64)
    lasso_total = np.asarray(lasso_total, dtype=np.float64)
    if bce_loss.shape != lasso_total.shape or bce_loss.ndim != 1:
        raise ValidationError(f"per-sample losses must be equal-length vectors, got {bce_loss.shape}, {lasso_total.shape}")
    if gamma < 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    if gamma == 0:
        return bce_loss.copy()
    return bce_loss + gamma * lasso_total


def retained_count(batch_size: int, retain_fraction: float) -> int:
    return math.ceil(retain_fraction * batch_size)


def _smallest(B, R):
    # stable sort: ties go to the lower index
    return np.sort(np.argsort(B, kind="stable")[:R])


def select_and_swap(B_f, B_g, retain_fraction: float = 0.75) -> SwapDecision:
    """Each network trains on the R samples the *other* network ranks as cleanest."""
    B_f = np.asarray(B_f, dtype=np.float64)
    B_g = np.asarray(B_g, dtype=np.float64)
    if B_f.shape != B_g.shape or B_f.ndim != 1:
        raise ValidationError(f"swapping losses must be equal-length vectors, got {B_f.shape}, {B_g.shape}")
    n = B_f.shape[0]
    if n == 0:
        raise ValidationError("empty batch")
    if not 0.0 < retain_fraction <= 1.0:
        raise ValidationError(f"retain_fraction must lie in (0, 1], got {retain_fraction}")
    R = retained_count(n, retain_fraction)
    for_f = _smallest(B_g, R)
    for_g = _smallest(B_f, R)
    everything = np.arange(n)
    return SwapDecision(
        selected_for_f=for_f,
        selected_for_g=for_g,
        excluded_for_f=np.setdiff1d(everything, for_f),
        excluded_for_g=np.setdiff1d(everything, for_g),
        R=R,
    )
