"""Small ReLU MLP with explicit backprop and Adam, exposing a tap layer.

Weights are stored as ``(fan_in, fan_out)`` so a layer computes ``X @ W + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class ModelParams:
    weights: tuple
    biases: tuple
    tap_index: int
    activation: str = "relu"

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def arch(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def validate(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValidationError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValidationError(f"layer {k}: weight {w.shape} and bias {b.shape} do not match")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ValidationError(f"layer {k}: input width {w.shape[0]} does not chain")
        if not 1 <= self.tap_index < self.n_layers:
            raise ValidationError(f"tap_index must lie in [1, {self.n_layers - 1}], got {self.tap_index}")
        if self.activation != "relu":
            raise ValidationError(f"unsupported activation {self.activation!r}")

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b]
        return np.concatenate(parts)

    def with_flat(self, vec: np.ndarray) -> "ModelParams":
        weights, biases, off = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[off:off + w.size].reshape(w.shape).copy())
            off += w.size
            biases.append(vec[off:off + b.size].copy())
            off += b.size
        if off != vec.size:
            raise ValidationError(f"flat vector has {vec.size} values, model needs {off}")
        return replace(self, weights=tuple(weights), biases=tuple(biases))


@dataclass(frozen=True)
class ForwardTrace:
    inputs: tuple  # input of each layer
    pre: tuple  # pre-activation of each layer
    tap_logits: np.ndarray
    final_logits: np.ndarray
    probabilities: np.ndarray


@dataclass(frozen=True)
class ParamGrads:
    weights: tuple
    biases: tuple

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b]
        return np.concatenate(parts)


@dataclass(frozen=True)
class AdamState:
    m: tuple
    v: tuple
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init(arch, tap_index: int | None = None, seed: int = 0) -> ModelParams:
    """Fan-in scaled uniform weights, zero biases.

    ``arch`` lists layer widths from input to output, e.g. ``[16, 64, 64, 8]``.
    ``tap_index`` defaults to the last hidden layer.
    """
    arch = [int(a) for a in arch]
    if len(arch) < 3:
        raise ValidationError("architecture needs input, at least one hidden layer and output")
    if min(arch) < 1:
        raise ValidationError(f"layer widths must be >= 1, got {arch}")
    if tap_index is None:
        tap_index = len(arch) - 2
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    params = ModelParams(tuple(weights), tuple(biases), int(tap_index))
    params.validate()
    return params


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: ModelParams, X) -> ForwardTrace:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.weights[0].shape[0]:
        raise ValidationError(f"input has shape {X.shape}, model expects (*, {params.weights[0].shape[0]})")
    inputs, pre = [], []
    h = X
    tap = None
    last = params.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = z if k == last else np.maximum(z, 0.0)
        if k + 1 == params.tap_index:
            tap = h
    return ForwardTrace(tuple(inputs), tuple(pre), tap, h, sigmoid(h))


def backward(params: ModelParams, trace: ForwardTrace, grad_final, grad_tap=None) -> ParamGrads:
    """Gradients of a scalar loss given its gradients w.r.t. final and tap outputs."""
    grad_final = np.asarray(grad_final, dtype=np.float64)
    if grad_final.shape != trace.final_logits.shape:
        raise ValidationError(f"final-logit gradient has shape {grad_final.shape}, expected {trace.final_logits.shape}")
    if grad_tap is not None:
        grad_tap = np.asarray(grad_tap, dtype=np.float64)
        if grad_tap.shape != trace.tap_logits.shape:
            raise ValidationError(f"tap gradient has shape {grad_tap.shape}, expected {trace.tap_logits.shape}")
    n = params.n_layers
    dW, db = [None] * n, [None] * n
    g = grad_final  # gradient w.r.t. output of layer k (post-activation)
    for k in range(n - 1, -1, -1):
        if k + 1 == params.tap_index and grad_tap is not None:
            g = g + grad_tap
        dz = g if k == n - 1 else g * (trace.pre[k] > 0)
        dW[k] = trace.inputs[k].T @ dz
        db[k] = dz.sum(axis=0)
        if k:
            g = dz @ params.weights[k].T
    return ParamGrads(tuple(dW), tuple(db))


def adam_init(params: ModelParams, lr: float = 1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    zeros = tuple(np.zeros_like(a) for pair in zip(params.weights, params.biases) for a in pair)
    return AdamState(m=zeros, v=zeros, step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: ModelParams, grads: ParamGrads, state: AdamState) -> tuple[ModelParams, AdamState]:
    flat_p = [a for pair in zip(params.weights, params.biases) for a in pair]
    flat_g = [a for pair in zip(grads.weights, grads.biases) for a in pair]
    if len(flat_g) != len(flat_p) or any(p.shape != g.shape for p, g in zip(flat_p, flat_g)):
        raise ValidationError("gradient shapes do not match parameters")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(flat_p, flat_g, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    params = replace(params, weights=tuple(new_p[0::2]), biases=tuple(new_p[1::2]))
    return params, replace(state, m=tuple(new_m), v=tuple(new_v), step=t)


def save_checkpoint(params: ModelParams, path, step: int = 0) -> tuple[Path, Path]:
    """Write ``<path>.json`` (architecture) and ``<path>.bin`` (little-endian float64)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "arch": params.arch,
        "tap_index": params.tap_index,
        "activation": params.activation,
        "step": int(step),
        "dtype": "<f8",
        "layout": "per layer: weight (fan_in x fan_out, row-major) then bias",
    }
    json_path, bin_path = path.with_suffix(".json"), path.with_suffix(".bin")
    json_path.write_text(json.dumps(manifest, indent=2) + "\n")
    bin_path.write_bytes(params.flat().astype("<f8").tobytes())
    return json_path, bin_path


def load_checkpoint(path) -> tuple[ModelParams, int]:
    path = Path(path)
    json_path, bin_path = path.with_suffix(".json"), path.with_suffix(".bin")
    try:
        manifest = json.loads(json_path.read_text())
        arch = [int(a) for a in manifest["arch"]]
        tap_index = int(manifest["tap_index"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{json_path}: bad checkpoint manifest ({exc})") from exc
    vec = np.frombuffer(bin_path.read_bytes(), dtype="<f8").astype(np.float64)
    template = init(arch, tap_index, seed=0)
    expected = template.flat().size
    if vec.size != expected:
        raise ValidationError(f"{bin_path}: {vec.size} values, architecture {arch} needs {expected}")
    params = template.with_flat(vec)
    return replace(params, activation=manifest.get("activation", "relu")), int(manifest.get("step", 0))
