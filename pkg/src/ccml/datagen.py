"""Synthetic multi-label datasets, label-noise injection and the CSV dataset format.

A dataset on disk is two files sharing a stem: ``<stem>.csv`` with one row per
sample and ``<stem>.manifest.json`` describing its shape.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .errors import ParseError, StateError, ValidationError


@dataclass(eq=False)
class Dataset:
    ids: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Y_clean: np.ndarray | None = None
    class_names: list[str] = field(default_factory=list)
    noise_mask: np.ndarray | None = None
    seed: int | None = None
    noise_rate_percent: int | None = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = _as_binary(self.Y, "Y")
        if self.Y_clean is not None:
            self.Y_clean = _as_binary(self.Y_clean, "Y_clean")
        if self.noise_mask is not None:
            self.noise_mask = _as_binary(self.noise_mask, "noise_mask")
        if not self.class_names:
            self.class_names = [f"class_{j}" for j in range(self.Y.shape[1])]
        self.validate()

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return self.Y.shape[1]

    def validate(self) -> None:
        if self.X.ndim != 2 or self.Y.ndim != 2:
            raise ValidationError("X and Y must be 2-d")
        m, v = self.Y.shape
        if self.X.shape[0] != m or self.ids.shape != (m,):
            raise ValidationError(
                f"row count mismatch: X has {self.X.shape[0]}, Y has {m}, ids has {self.ids.shape[0]}"
            )
        if len(self.class_names) != v:
            raise ValidationError(f"{len(self.class_names)} class names for {v} classes")
        for name in ("Y_clean", "noise_mask"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (m, v):
                raise ValidationError(f"{name} has shape {arr.shape}, expected {(m, v)}")
        if self.Y_clean is not None:
            counts = self.Y_clean.sum(axis=1)
            if m and counts.min() < 1:
                raise ValidationError("every clean label row needs at least one positive label")
            if self.noise_mask is not None and not np.array_equal(
                self.noise_mask, (self.Y != self.Y_clean).astype(np.int8)
            ):
                raise ValidationError("noise_mask does not match Y != Y_clean")
        elif self.noise_mask is not None:
            raise ValidationError("noise_mask given without Y_clean")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.dtype == b.dtype and np.array_equal(a, b)

        return (
            same(self.ids, other.ids)
            and same(self.X, other.X)
            and same(self.Y, other.Y)
            and same(self.Y_clean, other.Y_clean)
            and same(self.noise_mask, other.noise_mask)
            and self.class_names == other.class_names
            and self.seed == other.seed
            and self.noise_rate_percent == other.noise_rate_percent
        )


@dataclass(frozen=True)
class GenSpec:
    n_samples: int
    n_features: int = 16
    n_classes: int = 8
    seed: int = 0
    margin: float = 4.0
    label_correlation: float = 0.3
    # frequency of class j is max_freq * decay**j
    max_freq: float = 0.5
    decay: float = 0.75

    def validate(self) -> None:
        if self.n_classes < 2:
            raise ValidationError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.n_samples < 10:
            raise ValidationError(f"n_samples must be >= 10, got {self.n_samples}")
        if self.n_features < 1:
            raise ValidationError(f"n_features must be >= 1, got {self.n_features}")
        if not self.margin > 0:
            raise ValidationError(f"margin must be > 0, got {self.margin}")
        if not 0.0 <= self.label_correlation <= 1.0:
            raise ValidationError("label_correlation must lie in [0, 1]")
        if not 0.0 < self.max_freq < 1.0 or not 0.0 < self.decay <= 1.0:
            raise ValidationError("max_freq must lie in (0, 1) and decay in (0, 1]")


def _as_binary(arr, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.size and not ((arr == 0) | (arr == 1)).all():
        raise ValidationError(f"{name} must be binary (0/1)")
    return arr.astype(np.int8)


class _Concept:
    """Per-class linear labelling rule shared by every split drawn from one seed."""

    def __init__(self, spec: GenSpec, rng: np.random.Generator):
        d, v = spec.n_features, spec.n_classes
        shared = rng.standard_normal(d)
        own = rng.standard_normal((v, d))
        rho = spec.label_correlation
        self.W = math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * own
        self.b = rng.standard_normal(v)
        freqs = spec.max_freq * spec.decay ** np.arange(v)
        # latent features are N(0, I), so each score is N(b_j, |w_j|^2)
        norms = np.linalg.norm(self.W, axis=1)
        z = np.array([NormalDist().inv_cdf(1.0 - f) for f in freqs])
        self.thresholds = self.b + norms * z
        self.norms = norms
        self.noise_scale = 1.0 / spec.margin

    def label(self, latent: np.ndarray) -> np.ndarray:
        scores = latent @ self.W.T + self.b
        Y = (scores > self.thresholds).astype(np.int8)
        empty = Y.sum(axis=1) == 0
        if empty.any():
            standardized = (scores[empty] - self.thresholds) / self.norms
            Y[np.flatnonzero(empty), standardized.argmax(axis=1)] = 1
        return Y

    def sample(self, n: int, d: int, rng: np.random.Generator):
        latent = rng.standard_normal((n, d))
        X = latent + self.noise_scale * rng.standard_normal((n, d))
        return X, self.label(latent)


def _build(spec: GenSpec, concept: _Concept, n: int, rng, id_offset: int = 0) -> Dataset:
    X, Y = concept.sample(n, spec.n_features, rng)
    return Dataset(
        ids=np.arange(id_offset, id_offset + n),
        X=X,
        Y=Y.copy(),
        Y_clean=Y,
        class_names=[f"class_{j}" for j in range(spec.n_classes)],
        seed=spec.seed,
    )


def generate(spec: GenSpec) -> Dataset:
    """Draw a noise-free dataset (``Y == Y_clean``) from the concept fixed by ``spec.seed``."""
    spec.validate()
    concept_seq, train_seq, _ = np.random.SeedSequence(spec.seed).spawn(3)
    concept = _Concept(spec, np.random.default_rng(concept_seq))
    return _build(spec, concept, spec.n_samples, np.random.default_rng(train_seq))


def generate_split(spec: GenSpec, n_val: int) -> tuple[Dataset, Dataset]:
    """Train and validation datasets sharing one labelling concept.

    The train split equals ``generate(spec)``; the validation split is drawn
    from an independent child stream of the same seed.
    """
    spec.validate()
    if n_val < 1:
        raise ValidationError(f"n_val must be >= 1, got {n_val}")
    concept_seq, train_seq, val_seq = np.random.SeedSequence(spec.seed).spawn(3)
    concept = _Concept(spec, np.random.default_rng(concept_seq))
    train = _build(spec, concept, spec.n_samples, np.random.default_rng(train_seq))
    val = _build(spec, concept, n_val, np.random.default_rng(val_seq), id_offset=spec.n_samples)
    return train, val


def noise_counts(rate_percent: int, n_samples: int, n_classes: int) -> tuple[int, int]:
    """(samples altered, labels flipped per altered sample) for a noise rate."""
    if rate_percent == 0:
        return 0, 0
    return (
        max(1, rate_percent * n_samples // 100),
        max(1, rate_percent * n_classes // 100),
    )


def inject_noise(ds: Dataset, rate_percent: int, seed: int) -> Dataset:
    """Flip labels of a random ``rate_percent``% of samples.

    Each selected sample gets ``rate_percent``% of its label positions toggled,
    so both missing and wrong labels appear. Noise is applied to ``Y_clean``;
    any noise already present in ``ds`` is replaced.
    """
    if isinstance(rate_percent, bool) or int(rate_percent) != rate_percent:
        raise ValidationError(f"noise rate must be an integer percent, got {rate_percent!r}")
    rate_percent = int(rate_percent)
    if not 0 <= rate_percent <= 100:
        raise ValidationError(f"noise rate must lie in [0, 100], got {rate_percent}")
    if ds.Y_clean is None:
        raise StateError("inject_noise needs a dataset with clean labels")
    m, v = ds.Y_clean.shape
    n_rows, n_cols = noise_counts(rate_percent, m, v)
    rng = np.random.default_rng(seed)
    mask = np.zeros((m, v), dtype=np.int8)
    for i in rng.choice(m, size=n_rows, replace=False):
        mask[i, rng.choice(v, size=n_cols, replace=False)] = 1
    return Dataset(
        ids=ds.ids.copy(),
        X=ds.X.copy(),
        Y=ds.Y_clean ^ mask,
        Y_clean=ds.Y_clean.copy(),
        class_names=list(ds.class_names),
        noise_mask=mask,
        seed=ds.seed,
        noise_rate_percent=rate_percent,
    )


def _paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix == ".csv":
        path = path.with_suffix("")
    return path.with_name(path.name + ".csv"), path.with_name(path.name + ".manifest.json")


def dataset_paths(path) -> tuple[Path, Path]:
    """CSV and manifest paths for a dataset stem such as ``data/train``."""
    return _paths(path)


def save(ds: Dataset, path) -> tuple[Path, Path]:
    csv_path, manifest_path = _paths(path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    d, v = ds.n_features, ds.n_classes
    header = ["id"] + [f"x_{k}" for k in range(d)] + [f"y_{j}" for j in range(v)]
    if ds.Y_clean is not None:
        header += [f"yc_{j}" for j in range(v)]
    if ds.noise_mask is not None:
        header += [f"nm_{j}" for j in range(v)]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n_samples):
            row = [str(int(ds.ids[i]))]
            row += [repr(float(x)) for x in ds.X[i]]
            row += [str(int(y)) for y in ds.Y[i]]
            if ds.Y_clean is not None:
                row += [str(int(y)) for y in ds.Y_clean[i]]
            if ds.noise_mask is not None:
                row += [str(int(y)) for y in ds.noise_mask[i]]
            writer.writerow(row)
    manifest = {
        "n_samples": ds.n_samples,
        "n_features": d,
        "n_classes": v,
        "class_names": list(ds.class_names),
        "seed": ds.seed,
        "noise_rate_percent": ds.noise_rate_percent,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return csv_path, manifest_path


def _group(header: list[str], prefix: str) -> list[int]:
    cols = [k for k, name in enumerate(header) if name.startswith(prefix)]
    for n, k in enumerate(cols):
        if header[k] != f"{prefix}{n}":
            raise ParseError(f"header column {k + 1}: expected {prefix}{n}, found {header[k]!r}")
    return cols


def load(path) -> Dataset:
    csv_path, manifest_path = _paths(path)
    if not csv_path.exists():
        raise FileNotFoundError(f"dataset file not found: {csv_path}")
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: line {exc.lineno}: {exc.msg}") from exc
    for key in ("n_samples", "n_features", "n_classes"):
        if not isinstance(manifest.get(key), int):
            raise ParseError(f"{manifest_path}: field {key!r} missing or not an integer")

    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{csv_path}: empty file")
    header = rows[0]
    if not header or header[0] != "id":
        raise ParseError(f"{csv_path}: line 1: header must start with 'id'")
    x_cols, y_cols = _group(header, "x_"), _group(header, "y_")
    yc_cols, nm_cols = _group(header, "yc_"), _group(header, "nm_")
    known = 1 + len(x_cols) + len(y_cols) + len(yc_cols) + len(nm_cols)
    if known != len(header):
        raise ParseError(f"{csv_path}: line 1: unrecognised header columns")

    m, d, v = manifest["n_samples"], manifest["n_features"], manifest["n_classes"]
    if len(x_cols) != d:
        raise ValidationError(f"{csv_path}: manifest says {d} features, file has {len(x_cols)}")
    for name, cols in (("label", y_cols), ("clean label", yc_cols), ("noise mask", nm_cols)):
        if cols and len(cols) != v:
            raise ValidationError(f"{csv_path}: manifest says {v} classes, file has {len(cols)} {name} columns")
    if len(y_cols) != v:
        raise ValidationError(f"{csv_path}: manifest says {v} classes, file has {len(y_cols)} label columns")
    if len(rows) - 1 != m:
        raise ValidationError(f"{csv_path}: manifest says {m} samples, file has {len(rows) - 1}")

    ids = np.empty(m, dtype=np.int64)
    X = np.empty((m, d))
    int_block = np.empty((m, len(header) - 1 - d), dtype=np.int64)
    for r, row in enumerate(rows[1:]):
        lineno = r + 2
        if len(row) != len(header):
            raise ParseError(f"{csv_path}: line {lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            ids[r] = int(row[0])
        except ValueError:
            raise ParseError(f"{csv_path}: line {lineno}: field 'id' is not an integer") from None
        for k in range(d):
            try:
                X[r, k] = float(row[1 + k])
            except ValueError:
                raise ParseError(f"{csv_path}: line {lineno}: field {header[1 + k]!r} is not a number") from None
        for k, raw in enumerate(row[1 + d:]):
            if raw not in ("0", "1"):
                raise ParseError(f"{csv_path}: line {lineno}: field {header[1 + d + k]!r} must be 0 or 1")
            int_block[r, k] = int(raw)

    off = 0
    Y = int_block[:, off:off + v]
    off += v
    Y_clean = noise_mask = None
    if yc_cols:
        Y_clean = int_block[:, off:off + v]
        off += v
    if nm_cols:
        noise_mask = int_block[:, off:off + v]
    return Dataset(
        ids=ids,
        X=X,
        Y=Y,
        Y_clean=Y_clean,
        class_names=list(manifest.get("class_names") or []),
        noise_mask=noise_mask,
        seed=manifest.get("seed"),
        noise_rate_percent=manifest.get("noise_rate_percent"),
    )
