"""Training loops: the two-network CCML pipeline and the single-network baseline.

Per CCML mini-batch: forward both networks, per-sample BCE and group lasso,
label flipping once the activation epoch is reached, swapping losses and
cross-selection of the R cleanest samples, then one Adam step per network on

    mean BCE over selected samples + lambda1 * MMD(final logits) - lambda2 * MMD(tap features)
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import flipping, grouplasso, model, swap
from .bce import bce
from .datagen import Dataset
from .discrepancy import KernelSpec, consistency_loss, disparity_loss
from .errors import TrainingError, ValidationError
from .evaluate import micro_metrics

log = logging.getLogger(__name__)

# squared MMD with a kernel bounded by 1 never exceeds 2
DISPARITY_CAP = 2.0

METRICS_COLUMNS = [
    "epoch",
    "mode",
    "train_loss_f",
    "train_loss_g",
    "val_precision",
    "val_recall",
    "val_f1",
    "flips",
    "excluded_noisy_fraction",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    lambda1: float = 1.0
    lambda2: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    retain_fraction: float = 0.75
    flip_rate: float = 0.05
    flip_start_fraction: float = 0.9
    kernel: KernelSpec = KernelSpec()
    seed_data: int = 0
    seed_f: int = 1
    seed_g: int = 2
    mode: str = "ccml"
    hidden: tuple = (128, 128)
    tap_index: int | None = None

    def __post_init__(self):
        if isinstance(self.kernel, dict):
            object.__setattr__(self, "kernel", KernelSpec(**self.kernel))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        self.validate()

    def validate(self) -> None:
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValidationError(f"epochs must be an integer >= 1, got {self.epochs}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValidationError(f"batch_size must be an integer >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        for name in ("lambda1", "lambda2", "alpha", "beta", "gamma"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 < self.retain_fraction <= 1.0:
            raise ValidationError(f"retain_fraction must lie in (0, 1], got {self.retain_fraction}")
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ValidationError(f"flip_rate must lie in [0, 1], got {self.flip_rate}")
        if not 0.0 <= self.flip_start_fraction <= 1.0:
            raise ValidationError(f"flip_start_fraction must lie in [0, 1], got {self.flip_start_fraction}")
        if self.mode not in ("ccml", "baseline"):
            raise ValidationError(f"mode must be 'ccml' or 'baseline', got {self.mode!r}")
        if not self.hidden or min(self.hidden) < 1:
            raise ValidationError(f"hidden widths must be a non-empty list of positive ints, got {self.hidden}")
        if self.tap_index is not None and not 1 <= self.tap_index <= len(self.hidden):
            raise ValidationError(f"tap_index must lie in [1, {len(self.hidden)}], got {self.tap_index}")

    @property
    def flip_start_epoch(self) -> int:
        return math.ceil(self.flip_start_fraction * self.epochs)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RunState:
    config: TrainConfig
    params_f: model.ModelParams
    adam_f: model.AdamState
    params_g: model.ModelParams | None = None
    adam_g: model.AdamState | None = None
    training_labels: np.ndarray | None = None
    epoch: int = 0
    flip_logs: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    # (epoch, sample ids excluded for f, for g) per batch of the latest epoch
    excluded_last_epoch: list = field(default_factory=list)

    def predict_proba(self, X) -> np.ndarray:
        p = model.forward(self.params_f, X).probabilities
        if self.params_g is None:
            return p
        return 0.5 * (p + model.forward(self.params_g, X).probabilities)

    def flip_records(self) -> list[dict]:
        return [rec for entry in self.flip_logs for rec in entry.records()]

    def excluded_ids(self) -> np.ndarray:
        parts = [np.concatenate([f, g]) for f, g in self.excluded_last_epoch]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


@dataclass(frozen=True)
class LossTerms:
    total: float
    bce: float
    consistency: float
    disparity: float


def _finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite {name} loss: {value}")
    return value


def network_loss(
    trace: model.ForwardTrace,
    labels: np.ndarray,
    selected: np.ndarray,
    consistency: tuple | None = None,
    disparity: tuple | None = None,
    lambda1: float = 0.0,
    lambda2: float = 0.0,
):
    """One network's mini-batch loss and its gradients w.r.t. final and tap outputs.

    The BCE term averages over ``selected`` rows only. ``consistency`` and
    ``disparity`` are ``(value, gradient w.r.t. this network's outputs)`` pairs
    from the batch-level MMD terms; the other network's outputs are constants.
    Returns ``(LossTerms, grad_final, grad_tap)`` with ``grad_tap`` None when
    ``lambda2`` is 0.
    """
    R = len(selected)
    report = bce(trace.probabilities, labels)
    grad_final = np.zeros_like(trace.final_logits)
    grad_final[selected] = report.grad[selected] / R
    bce_term = _finite("BCE", float(report.loss[selected].mean()))
    total = bce_term
    lc_value = ld_value = 0.0
    grad_tap = None
    if lambda1:
        lc_value, lc_grad = consistency
        total += lambda1 * _finite("consistency", lc_value)
        grad_final += lambda1 * lc_grad
    if lambda2:
        ld_value, ld_grad = disparity
        _finite("disparity", ld_value)
        if ld_value < DISPARITY_CAP:
            total -= lambda2 * ld_value
            grad_tap = -lambda2 * ld_grad
        else:
            total -= lambda2 * DISPARITY_CAP
            grad_tap = np.zeros_like(trace.tap_logits)
    return LossTerms(_finite("total", total), bce_term, lc_value, ld_value), grad_final, grad_tap


def _batches(n: int, cfg: TrainConfig, epoch: int):
    perm = np.random.default_rng([cfg.seed_data, epoch]).permutation(n)
    return [perm[k:k + cfg.batch_size] for k in range(0, n, cfg.batch_size)]


def _arch(ds: Dataset, cfg: TrainConfig) -> list[int]:
    return [ds.n_features, *cfg.hidden, ds.n_classes]


def _check_data(ds: Dataset, val: Dataset | None) -> None:
    ds.validate()
    if ds.n_samples < 1:
        raise ValidationError("training set is empty")
    if val is not None:
        if val.n_features != ds.n_features or val.n_classes != ds.n_classes:
            raise ValidationError("validation set shape does not match training set")


def _val_metrics(state: RunState, val: Dataset | None):
    if val is None:
        return None, None, None
    truth = val.Y_clean if val.Y_clean is not None else val.Y
    pred = (state.predict_proba(val.X) >= 0.5).astype(np.int8)
    return micro_metrics(pred, truth)


def _noisy_fraction(excluded: list, noisy_ids: np.ndarray | None):
    if noisy_ids is None or not excluded:
        return None
    ids = np.concatenate(excluded)
    if ids.size == 0:
        return None
    return float(np.isin(ids, noisy_ids).mean())


def train_baseline(ds: Dataset, cfg: TrainConfig, val: Dataset | None = None, on_epoch=None) -> RunState:
    """Single network, plain BCE on full mini-batches."""
    if cfg.mode != "baseline":
        raise ValidationError(f"train_baseline needs mode='baseline', got {cfg.mode!r}")
    _check_data(ds, val)
    params = model.init(_arch(ds, cfg), cfg.tap_index, cfg.seed_f)
    state = RunState(cfg, params, model.adam_init(params, cfg.learning_rate), training_labels=ds.Y.copy())
    labels = state.training_labels
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(ds.n_samples, cfg, epoch):
            trace = model.forward(state.params_f, ds.X[idx])
            terms, grad_final, _ = network_loss(trace, labels[idx], np.arange(len(idx)))
            grads = model.backward(state.params_f, trace, grad_final)
            state.params_f, state.adam_f = model.adam_step(state.params_f, grads, state.adam_f)
            losses.append(terms.total)
        state.epoch = epoch
        p, r, f1 = _val_metrics(state, val)
        row = dict(zip(METRICS_COLUMNS, [epoch, "baseline", float(np.mean(losses)), None, p, r, f1, 0, None]))
        state.metrics.append(row)
        if on_epoch:
            on_epoch(row)
    return state


def train_ccml(ds: Dataset, cfg: TrainConfig, val: Dataset | None = None, on_epoch=None) -> RunState:
    if cfg.mode != "ccml":
        raise ValidationError(f"train_ccml needs mode='ccml', got {cfg.mode!r}")
    _check_data(ds, val)
    arch = _arch(ds, cfg)
    pf = model.init(arch, cfg.tap_index, cfg.seed_f)
    pg = model.init(arch, cfg.tap_index, cfg.seed_g)
    state = RunState(
        cfg,
        pf,
        model.adam_init(pf, cfg.learning_rate),
        pg,
        model.adam_init(pg, cfg.learning_rate),
        training_labels=ds.Y.copy(),
    )
    labels = state.training_labels
    locked = np.zeros(labels.shape, dtype=bool)
    noisy_ids = ds.ids[ds.noise_mask.any(axis=1)] if ds.noise_mask is not None else None
    flip_from = cfg.flip_start_epoch

    for epoch in range(1, cfg.epochs + 1):
        losses_f, losses_g, excluded, n_flips = [], [], [], 0
        state.excluded_last_epoch = []
        for b, idx in enumerate(_batches(ds.n_samples, cfg, epoch)):
            Xb = ds.X[idx]
            tf = model.forward(state.params_f, Xb)
            tg = model.forward(state.params_g, Xb)
            yb = labels[idx]

            bce_f = bce(tf.probabilities, yb).loss
            bce_g = bce(tg.probabilities, yb).loss
            lasso_f = grouplasso.lasso(tf.probabilities, yb, cfg.alpha, cfg.beta)
            lasso_g = grouplasso.lasso(tg.probabilities, yb, cfg.alpha, cfg.beta)

            if epoch >= flip_from:
                candidates = flipping.select_candidates(
                    tf.probabilities,
                    tg.probabilities,
                    yb,
                    lasso_f.class_scores,
                    lasso_g.class_scores,
                    sample_ids=ds.ids[idx],
                    locked=locked[idx],
                )
                yb, flip_log = flipping.flip(yb, candidates, cfg.flip_rate, epoch=epoch, batch=b)
                if flip_log.flipped:
                    rows = [c.row for c in flip_log.flipped]
                    cols = [c.cls for c in flip_log.flipped]
                    labels[idx[rows], cols] = yb[rows, cols]
                    locked[idx[rows], cols] = True
                    again = flipping.recompute_after_flip(tf.probabilities, tg.probabilities, yb, cfg.alpha, cfg.beta)
                    bce_f, bce_g, lasso_f, lasso_g = again.bce_f, again.bce_g, again.lasso_f, again.lasso_g
                    n_flips += len(flip_log.flipped)
                    state.flip_logs.append(flip_log)

            B_f = swap.swapping_loss(bce_f, lasso_f.total, cfg.gamma)
            B_g = swap.swapping_loss(bce_g, lasso_g.total, cfg.gamma)
            decision = swap.select_and_swap(B_f, B_g, cfg.retain_fraction)
            ex_f, ex_g = ds.ids[idx[decision.excluded_for_f]], ds.ids[idx[decision.excluded_for_g]]
            excluded += [ex_f, ex_g]
            state.excluded_last_epoch.append((ex_f, ex_g))

            lc_f = lc_g = ld_f = ld_g = None
            if cfg.lambda1:
                lc = consistency_loss(tf.final_logits, tg.final_logits, cfg.kernel)
                lc_f, lc_g = (lc.value, lc.grad_P), (lc.value, lc.grad_Q)
            if cfg.lambda2:
                ld = disparity_loss(tf.tap_logits, tg.tap_logits, cfg.kernel)
                ld_f, ld_g = (ld.value, ld.grad_P), (ld.value, ld.grad_Q)
            terms_f, gfin_f, gtap_f = network_loss(
                tf, yb, decision.selected_for_f, lc_f, ld_f, cfg.lambda1, cfg.lambda2
            )
            terms_g, gfin_g, gtap_g = network_loss(
                tg, yb, decision.selected_for_g, lc_g, ld_g, cfg.lambda1, cfg.lambda2
            )
            grads_f = model.backward(state.params_f, tf, gfin_f, gtap_f)
            grads_g = model.backward(state.params_g, tg, gfin_g, gtap_g)
            state.params_f, state.adam_f = model.adam_step(state.params_f, grads_f, state.adam_f)
            state.params_g, state.adam_g = model.adam_step(state.params_g, grads_g, state.adam_g)
            losses_f.append(terms_f.total)
            losses_g.append(terms_g.total)

        state.epoch = epoch
        p, r, f1 = _val_metrics(state, val)
        row = dict(
            zip(
                METRICS_COLUMNS,
                [epoch, "ccml", float(np.mean(losses_f)), float(np.mean(losses_g)), p, r, f1, n_flips,
                 _noisy_fraction(excluded, noisy_ids)],
            )
        )
        state.metrics.append(row)
        if on_epoch:
            on_epoch(row)
    return state


def train(ds: Dataset, cfg: TrainConfig, val: Dataset | None = None, on_epoch=None) -> RunState:
    if cfg.mode == "baseline":
        return train_baseline(ds, cfg, val, on_epoch)
    return train_ccml(ds, cfg, val, on_epoch)
