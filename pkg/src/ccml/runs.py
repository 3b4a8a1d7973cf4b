"""Run directories: everything needed to reproduce and evaluate one training run.

Layout of ``<run>/``::

    run.json          config, seeds, content hashes of the input files
    metrics.csv       one row per epoch
    flips.jsonl       one JSON object per flipped label
    excluded.json     sample ids the swap step excluded in the final epoch
    detection.json    exclusion/flip scores against injected noise (if known)
    net_f.{json,bin}  checkpoint(s); net_g only in ccml mode
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__, datagen, evaluate, model
from .errors import StateError
from .trainer import METRICS_COLUMNS, RunState, TrainConfig, train


def git_blob_hash(path) -> str:
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def dataset_hashes(stem) -> dict:
    csv_path, manifest_path = datagen.dataset_paths(stem)
    return {
        "path": str(stem),
        "csv": git_blob_hash(csv_path),
        "manifest": git_blob_hash(manifest_path),
    }


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in METRICS_COLUMNS])


def save_run(state: RunState, out_dir, ds: datagen.Dataset, inputs: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = state.config
    manifest = {
        "ccml_version": __version__,
        "mode": cfg.mode,
        "config": cfg.to_dict(),
        "seeds": {"data_order": cfg.seed_data, "net_f": cfg.seed_f, "net_g": cfg.seed_g},
        "inputs": inputs or {},
        "epochs_completed": state.epoch,
        "n_flips": sum(len(entry.flipped) for entry in state.flip_logs),
    }
    (out / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    write_metrics_csv(out / "metrics.csv", state.metrics)
    with open(out / "flips.jsonl", "w") as fh:
        for rec in state.flip_records():
            fh.write(json.dumps(rec) + "\n")
    model.save_checkpoint(state.params_f, out / "net_f", state.adam_f.step)
    if state.params_g is not None:
        model.save_checkpoint(state.params_g, out / "net_g", state.adam_g.step)
    excluded = {
        "net_f": [int(i) for f, _ in state.excluded_last_epoch for i in f],
        "net_g": [int(i) for _, g in state.excluded_last_epoch for i in g],
    }
    (out / "excluded.json").write_text(json.dumps(excluded) + "\n")
    if ds.noise_mask is not None:
        detection = evaluate.noise_detection_metrics(
            state.excluded_ids(), state.flip_records(), ds.ids, ds.noise_mask, ds.Y_clean
        )
        (out / "detection.json").write_text(json.dumps(detection, indent=2, sort_keys=True) + "\n")
    return out


def train_to_dir(train_stem, cfg: TrainConfig, out_dir, val_stem=None) -> RunState:
    ds = datagen.load(train_stem)
    val = datagen.load(val_stem) if val_stem is not None else None
    inputs = {"train": dataset_hashes(train_stem)}
    if val_stem is not None:
        inputs["val"] = dataset_hashes(val_stem)
    state = train(ds, cfg, val)
    save_run(state, out_dir, ds, inputs)
    return state


class LoadedRun:
    """Checkpoints of a finished run, enough to predict."""

    def __init__(self, run_dir):
        self.dir = Path(run_dir)
        manifest_path = self.dir / "run.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"not a run directory (no run.json): {self.dir}")
        self.manifest = json.loads(manifest_path.read_text())
        self.config = TrainConfig.from_dict(self.manifest["config"])
        self.params_f, _ = model.load_checkpoint(self.dir / "net_f")
        self.params_g = None
        if self.config.mode == "ccml":
            self.params_g, _ = model.load_checkpoint(self.dir / "net_g")

    def predict_proba(self, X) -> np.ndarray:
        p = model.forward(self.params_f, X).probabilities
        if self.params_g is None:
            return p
        return 0.5 * (p + model.forward(self.params_g, X).probabilities)

    def detection(self) -> dict | None:
        path = self.dir / "detection.json"
        return json.loads(path.read_text()) if path.exists() else None


def eval_to_dir(run_dir, data_stem, out_dir=None) -> evaluate.MetricsReport:
    """Predict ``data_stem`` with a saved run; write predictions.csv and metrics.json."""
    run = LoadedRun(run_dir)
    ds = datagen.load(data_stem)
    truth = ds.Y_clean if ds.Y_clean is not None else ds.Y
    if truth is None:
        raise StateError("evaluation data has no labels")
    probs = run.predict_proba(ds.X)
    report = evaluate.evaluate(probs, truth, detection=run.detection())
    out = Path(out_dir) if out_dir is not None else run.dir
    evaluate.write_predictions(out / "predictions.csv", ds.ids, probs)
    evaluate.write_report(
        out / "metrics.json",
        report,
        {"mode": run.config.mode, "run": str(run.dir), "data": dataset_hashes(data_stem)},
    )
    return report
