"""Baseline vs CCML across noise rates and seeds.

Each (rate, seed) cell corrupts the clean training set, trains both modes and
evaluates them on the clean validation set, writing into its own directory
through the same code paths as the ``train`` and ``eval`` commands.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datagen, runs
from .errors import ValidationError
from .trainer import TrainConfig

log = logging.getLogger(__name__)

MODES = ("baseline", "ccml")
METRICS = ("precision", "recall", "f1")


@dataclass
class ExperimentPlan:
    train: str
    val: str
    out: str
    rates: list = field(default_factory=lambda: [20, 30, 40, 50])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    config: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        if not self.rates:
            raise ValidationError("at least one noise rate is required")
        for r in self.rates:
            if int(r) != r or not 0 <= r <= 100:
                raise ValidationError(f"noise rates must be integers in [0, 100], got {r}")
        if not self.seeds:
            raise ValidationError("at least one seed is required")


def cell_seeds(seed: int) -> dict:
    """Noise, data-order and initialisation seeds derived from one experiment seed."""
    noise, order, f, g = (int(s) for s in np.random.SeedSequence(seed).generate_state(4))
    return {"noise": noise, "seed_data": order, "seed_f": f, "seed_g": g}


def cell_dir(out, rate: int, seed: int) -> Path:
    return Path(out) / f"rate{rate:03d}" / f"seed{seed}"


def run_cell(plan: ExperimentPlan, rate: int, seed: int, mode: str) -> dict:
    seeds = cell_seeds(seed)
    base = cell_dir(plan.out, rate, seed)
    noisy_stem = base / "train_noisy"
    if not datagen.dataset_paths(noisy_stem)[0].exists():
        noisy = datagen.inject_noise(datagen.load(plan.train), rate, seeds["noise"])
        datagen.save(noisy, noisy_stem)
    cfg = plan.config.replace(
        mode=mode, seed_data=seeds["seed_data"], seed_f=seeds["seed_f"], seed_g=seeds["seed_g"]
    )
    run_dir = base / mode
    runs.train_to_dir(noisy_stem, cfg, run_dir, plan.val)
    report = runs.eval_to_dir(run_dir, plan.val)
    detection = report.detection or {}
    return {
        "rate": rate,
        "seed": seed,
        "mode": mode,
        "status": "ok",
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "enrichment": detection.get("enrichment"),
        "flip_precision": detection.get("flip_precision"),
    }


def _safe_cell(args) -> dict:
    plan, rate, seed, mode = args
    try:
        return run_cell(plan, rate, seed, mode)
    except Exception as exc:  # recorded per cell; the report is still written
        log.exception("cell rate=%s seed=%s mode=%s failed", rate, seed, mode)
        return {"rate": rate, "seed": seed, "mode": mode, "status": f"error: {exc}",
                **{k: None for k in (*METRICS, "enrichment", "flip_precision")}}


def _workers() -> int:
    raw = os.environ.get("CCML_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"CCML_THREADS must be an integer, got {raw!r}") from None


def summarize(cells: list[dict], rates, modes=MODES) -> list[dict]:
    rows = []
    for rate in rates:
        row = {"rate": rate}
        for mode in modes:
            group = [c for c in cells if c["rate"] == rate and c["mode"] == mode and c["status"] == "ok"]
            row[f"{mode}_n"] = len(group)
            for metric in (*METRICS, "enrichment"):
                vals = [c[metric] for c in group if c[metric] is not None]
                row[f"{mode}_{metric}_mean"] = float(np.mean(vals)) if vals else None
                row[f"{mode}_{metric}_std"] = float(np.std(vals)) if vals else None
        b, c = row.get("baseline_f1_mean"), row.get("ccml_f1_mean")
        row["f1_gain"] = c - b if b is not None and c is not None else None
        rows.append(row)
    return rows


def _pct(mean, std):
    if mean is None:
        return "n/a"
    return f"{100 * mean:5.1f} ± {100 * std:4.1f}"


def render_table(summary: list[dict]) -> str:
    head = ["rate"] + [f"{mode} {m[0].upper() if m != 'f1' else 'F1'}" for mode in MODES for m in METRICS]
    lines = ["  ".join(f"{h:>14}" for h in head)]
    for row in summary:
        cells = [f"{row['rate']}%"] + [
            _pct(row[f"{mode}_{m}_mean"], row[f"{mode}_{m}_std"]) for mode in MODES for m in METRICS
        ]
        lines.append("  ".join(f"{c:>14}" for c in cells))
    lines.append("")
    for row in summary:
        if row["f1_gain"] is None:
            continue
        note = f"rate {row['rate']:>3}%: CCML - baseline F1 = {100 * row['f1_gain']:+.1f} points"
        if row["rate"] < 20:
            note += " (low-noise regime: CCML drops the highest-loss samples of every batch)"
        lines.append(note)
    return "\n".join(lines) + "\n"


def write_report(out, cells: list[dict], summary: list[dict]) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cell_cols = ["rate", "seed", "mode", "status", *METRICS, "enrichment", "flip_precision"]
    with open(out / "cells.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cell_cols)
        writer.writeheader()
        for c in cells:
            writer.writerow({k: ("" if c.get(k) is None else c[k]) for k in cell_cols})
    if summary:
        with open(out / "report.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(summary[0]))
            writer.writeheader()
            for row in summary:
                writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    (out / "report.txt").write_text(render_table(summary))
    (out / "report.json").write_text(json.dumps({"cells": cells, "summary": summary}, indent=2) + "\n")


def run_experiment(plan: ExperimentPlan) -> tuple[list[dict], list[dict]]:
    plan.validate()
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(
        json.dumps(
            {
                "train": runs.dataset_hashes(plan.train),
                "val": runs.dataset_hashes(plan.val),
                "rates": list(plan.rates),
                "seeds": list(plan.seeds),
                "config": plan.config.to_dict(),
            },
            indent=2,
        )
        + "\n"
    )
    # corrupt first so parallel cells never race on the noisy copy
    for rate in plan.rates:
        for seed in plan.seeds:
            stem = cell_dir(plan.out, rate, seed) / "train_noisy"
            noisy = datagen.inject_noise(datagen.load(plan.train), rate, cell_seeds(seed)["noise"])
            datagen.save(noisy, stem)
    jobs = [(plan, rate, seed, mode) for rate in plan.rates for seed in plan.seeds for mode in MODES]
    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_safe_cell, jobs))
    else:
        cells = [_safe_cell(job) for job in jobs]
    summary = summarize(cells, plan.rates)
    write_report(out, cells, summary)
    return cells, summary
