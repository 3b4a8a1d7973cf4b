"""Gaussian-kernel MMD between two equally sized sample sets, with gradients.

The value is the biased squared-MMD estimate
``(sum k(P,P) - 2 sum k(P,Q) + sum k(Q,Q)) / m**2``. Kernel sums use
``math.fsum`` so the result is independent of argument order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class KernelSpec:
    policy: str = "median"  # "median" or "fixed"
    sigma: float | None = None

    def __post_init__(self):
        if self.policy not in ("median", "fixed"):
            raise ValidationError(f"unknown bandwidth policy {self.policy!r}")
        if self.policy == "fixed" and (self.sigma is None or not self.sigma > 0):
            raise ValidationError(f"fixed bandwidth needs sigma > 0, got {self.sigma}")

    @classmethod
    def fixed(cls, sigma: float) -> "KernelSpec":
        return cls("fixed", float(sigma))


@dataclass(frozen=True)
class MmdResult:
    value: float
    grad_P: np.ndarray
    grad_Q: np.ndarray
    sigma: float


def _sq_dists(A, B):
    # per-pair sum of squared differences, so d(a, b) == d(b, a) bit for bit
    return cdist(A, B, "sqeuclidean")


def _median_from(d2_all) -> float:
    iu = np.triu_indices(d2_all.shape[0], k=1)
    if iu[0].size == 0:
        return 1.0
    return max(float(np.median(np.sqrt(d2_all[iu]))), SIGMA_FLOOR)


def median_bandwidth(P, Q) -> float:
    """Median pairwise Euclidean distance over the rows of ``P`` and ``Q`` together."""
    S = np.concatenate([np.asarray(P, float), np.asarray(Q, float)])
    return _median_from(_sq_dists(S, S))


def bandwidth(P, Q, kernel: KernelSpec) -> float:
    if kernel.policy == "fixed":
        return float(kernel.sigma)
    return median_bandwidth(P, Q)


def mmd(S_P, S_Q, kernel: KernelSpec | None = None, sigma: float | None = None) -> MmdResult:
    """Squared MMD of two m x h sample matrices and its gradients.

    ``sigma`` overrides the kernel's bandwidth policy; it is treated as a
    constant in the gradients either way.
    """
    P = np.asarray(S_P, dtype=np.float64)
    Q = np.asarray(S_Q, dtype=np.float64)
    if P.ndim != 2 or Q.ndim != 2:
        raise ValidationError("sample sets must be 2-d matrices")
    if P.shape != Q.shape:
        raise ValidationError(f"sample sets must have equal shapes, got {P.shape} and {Q.shape}")
    m, h = P.shape
    if m < 1 or h < 1:
        raise ValidationError("sample sets must be non-empty")
    d2 = _sq_dists(np.concatenate([P, Q]), np.concatenate([P, Q]))
    if sigma is None:
        kernel = kernel or KernelSpec()
        sigma = kernel.sigma if kernel.policy == "fixed" else _median_from(d2)
    if not sigma > 0:
        raise ValidationError(f"kernel bandwidth must be > 0, got {sigma}")

    K = np.exp((-0.5 / (sigma * sigma)) * d2)
    Kpp, Kqq, Kpq = K[:m, :m], K[m:, m:], K[:m, m:]
    s_pp = math.fsum(Kpp.ravel())
    s_qq = math.fsum(Kqq.ravel())
    s_pq = math.fsum(Kpq.ravel())
    value = math.fsum((s_pp, -2.0 * s_pq, s_qq)) / (m * m)
    value = max(value, 0.0)

    # d/dP_i: (2 / (m^2 sigma^2)) [ sum_t Kpq_it (P_i - Q_t) - sum_t Kpp_it (P_i - P_t) ]
    c = 2.0 / (m * m * sigma * sigma)
    grad_P = c * ((P * Kpq.sum(1)[:, None] - Kpq @ Q) - (P * Kpp.sum(1)[:, None] - Kpp @ P))
    Kqp = Kpq.T
    grad_Q = c * ((Q * Kqp.sum(1)[:, None] - Kqp @ P) - (Q * Kqq.sum(1)[:, None] - Kqq @ Q))
    return MmdResult(value, grad_P, grad_Q, float(sigma))


def disparity_loss(F_hat, G_hat, kernel: KernelSpec | None = None, sigma: float | None = None) -> MmdResult:
    """MMD between the two networks' tap-layer features."""
    return mmd(F_hat, G_hat, kernel, sigma)


def consistency_loss(F, G, kernel: KernelSpec | None = None, sigma: float | None = None) -> MmdResult:
    """MMD between the two networks' final logits."""
    return mmd(F, G, kernel, sigma)
