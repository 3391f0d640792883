"""Command-line front door: ``drspcrl train | sweep | verify | plot``.

Exit codes: 0 success, 1 runtime failure (the run manifest is marked
failed), 2 invalid configuration or usage.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .runs import SWEEP_CHART, SWEEP_CSV, TRAIN_CSV, run_sweep, run_train

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drspcrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train an agent; writes train.csv, checkpoint.json, manifest.json")
    train.add_argument("--config", required=True)
    train.add_argument("--seed", type=int, help="overrides the config seed")
    train.add_argument("--out", help="run directory (default: output_dir from the config)")
    train.add_argument("--checkpoint", help="resume from this checkpoint")

    sw = sub.add_parser("sweep", help="perturbation sweep of a trained policy; writes sweep.csv (+ sweep.svg)")
    sw.add_argument("--config", required=True)
    sw.add_argument("--checkpoint", required=True)
    sw.add_argument("--seed", type=int, help="overrides the evaluation master seed")
    sw.add_argument("--out", help="output directory (default: <checkpoint dir>/sweep)")

    ver = sub.add_parser("verify", help="run the oracle property suites")
    from ..verification import SCOPES

    ver.add_argument("scope", nargs="?", default="all", choices=SCOPES)

    plot = sub.add_parser("plot", help="render SVG charts from a run directory's CSVs")
    plot.add_argument("run_dir")
    plot.add_argument("--out", help="directory for the charts (default: the run directory)")
    return parser


def _load_config(path: str, seed: int | None) -> ExperimentConfig:
    config = ExperimentConfig.load(path)
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        config = replace(config, seed=seed)
    return config


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k, v in row.items():
            if k != "perturbation_kind":
                row[k] = float(v)
    return rows


def cmd_train(args) -> int:
    config = _load_config(args.config, args.seed)
    out = Path(args.out or config.output_dir)
    path = run_train(config, out, args.checkpoint)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_config(args.config, None)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        config = replace(config, evaluation=replace(config.evaluation, seed=args.seed))
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "sweep"
    path = run_sweep(config, args.checkpoint, out)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from ..verification import run_scope

    results = run_scope(args.scope)
    for res in results:
        print(res.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_FAILURE
    print(f"all {len(results)} properties passed")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .charts import sweep_chart, training_chart

    run_dir = Path(args.run_dir)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    made = []
    if (run_dir / TRAIN_CSV).exists():
        training_chart(_read_csv(run_dir / TRAIN_CSV), out / "training.svg")
        made.append(out / "training.svg")
    if (run_dir / SWEEP_CSV).exists():
        sweep_chart(_read_csv(run_dir / SWEEP_CSV), out / SWEEP_CHART)
        made.append(out / SWEEP_CHART)
    if not made:
        raise FileNotFoundError(f"no {TRAIN_CSV} or {SWEEP_CSV} in {run_dir}")
    for p in made:
        print(f"wrote {p}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "verify": cmd_verify, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
