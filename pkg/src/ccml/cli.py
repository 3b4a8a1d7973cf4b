"""Command line: ``ccml {generate,corrupt,train,eval,experiment}``.

Exit status is 0 on success, 1 for invalid input (bad flags, config or files)
and 2 when a run fails at runtime.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, datagen, experiment, runs
from .errors import ParseError, StateError, TrainingError, ValidationError
from .trainer import TrainConfig

log = logging.getLogger("ccml")

EXIT_INVALID = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


_OVERRIDES = {
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "lambda1": float,
    "lambda2": float,
    "alpha": float,
    "beta": float,
    "gamma": float,
    "retain_fraction": float,
    "flip_rate": float,
    "flip_start_fraction": float,
    "seed_data": int,
    "seed_f": int,
    "seed_g": int,
    "tap_index": int,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with TrainConfig fields")
    for name, typ in _OVERRIDES.items():
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None)
    p.add_argument("--hidden", type=_int_list, default=None, help="hidden widths, e.g. 128,128")
    p.add_argument("--sigma", type=float, default=None, help="fixed kernel bandwidth (default: median heuristic)")


def _config_from(args, mode: str | None) -> TrainConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.config}: line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ValidationError(f"{args.config}: config must be a JSON object")
    for name in (*_OVERRIDES, "hidden"):
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    if args.sigma is not None:
        data["kernel"] = {"policy": "fixed", "sigma": args.sigma}
    if mode is not None:
        data["mode"] = mode
    return TrainConfig.from_dict(data)


def cmd_generate(args) -> int:
    spec = datagen.GenSpec(
        n_samples=args.samples,
        n_features=args.features,
        n_classes=args.classes,
        seed=args.seed,
        margin=args.margin,
        label_correlation=args.label_correlation,
    )
    n_val = args.val_samples if args.val_samples is not None else max(1, args.samples // 4)
    train, val = datagen.generate_split(spec, n_val)
    out = Path(args.out)
    for name, ds in (("train", train), ("val", val)):
        csv_path, _ = datagen.save(ds, out / name)
        print(f"wrote {csv_path} ({ds.n_samples} samples)")
    return 0


def cmd_corrupt(args) -> int:
    ds = datagen.load(args.inp)
    noisy = datagen.inject_noise(ds, args.noise, args.seed)
    target = args.out or args.inp
    csv_path, _ = datagen.save(noisy, target)
    print(f"wrote {csv_path}: {int(noisy.noise_mask.sum())} labels flipped in "
          f"{int(noisy.noise_mask.any(axis=1).sum())} samples")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from(args, args.mode)
    state = runs.train_to_dir(args.train, cfg, args.out, args.val)
    last = state.metrics[-1]
    f1 = last["val_f1"]
    print(f"{cfg.mode}: {state.epoch} epochs, val F1 = {f1:.4f}" if f1 is not None else f"{cfg.mode}: done")
    print(f"run written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    report = runs.eval_to_dir(args.run, args.data, args.out)
    print(f"precision {report.precision:.4f}  recall {report.recall:.4f}  F1 {report.f1:.4f}")
    if report.detection and report.detection.get("enrichment") is not None:
        print(f"noise enrichment among excluded samples: {report.detection['enrichment']:.3f}")
    return 0


def cmd_experiment(args) -> int:
    plan = experiment.ExperimentPlan(
        train=args.train,
        val=args.val,
        out=args.out,
        rates=args.rates,
        seeds=args.seeds,
        config=_config_from(args, None),
    )
    cells, summary = experiment.run_experiment(plan)
    print(experiment.render_table(summary), end="")
    failed = [c for c in cells if c["status"] != "ok"]
    if failed:
        print(f"{len(failed)} of {len(cells)} cells failed; see {Path(args.out) / 'cells.csv'}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ccml", description="Noisy multi-label learning with two collaborating networks.")
    parser.add_argument("--version", action="version", version=f"ccml {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="draw synthetic train and validation datasets")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--features", type=int, default=16)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-samples", type=int, default=None, help="default: samples / 4")
    p.add_argument("--margin", type=float, default=datagen.GenSpec.margin)
    p.add_argument("--label-correlation", type=float, default=datagen.GenSpec.label_correlation)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("corrupt", help="inject synthetic label noise")
    p.add_argument("--in", dest="inp", required=True, help="dataset stem, e.g. data/train")
    p.add_argument("--noise", type=int, required=True, help="noise rate in percent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output stem (default: overwrite --in)")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="train a baseline or CCML run")
    p.add_argument("--mode", choices=["baseline", "ccml"], default=None)
    p.add_argument("--train", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved run on a dataset")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="default: the run directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="baseline vs CCML across noise rates and seeds")
    p.add_argument("--train", required=True, help="clean training dataset stem")
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rates", type=_int_list, default=[20, 30, 40, 50])
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    _add_config_flags(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (ValidationError, ParseError, StateError, FileNotFoundError) as exc:
        print(f"ccml {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingError, OSError) as exc:
        print(f"ccml {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
