"""Command-line entry point: simulate, train, evaluate, plot, report.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import yaml

from .config import ConfigError, load_config
from .fda import FunctionalDataset
from .io import DataError, ingest_csv, write_basis_csv, write_dataset_csv
from .micronet import save_json
from .model import TrainingError
from .runner import comparison_table, format_table, load_checkpoint, resolve_output_dir, run_experiment
from .simgen import build_case, true_signals
from .training import evaluate

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAIN = 0, 2, 3, 4

log = logging.getLogger("adafnn")


def cmd_simulate(args) -> int:
    if args.case not in (1, 2, 3, 4, 5):
        raise ConfigError(f"unknown simulation case {args.case}")
    out = resolve_output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    case = build_case(args.case, args.seed, args.n_train, args.n_val, args.n_test)
    for name, split in zip(("train", "val", "test"), case.raw):
        write_dataset_csv(out / f"{name}.csv", split.dataset)
    t = case.train.grid.points
    names, curves = true_signals(args.case, t)
    write_basis_csv(out / "truth.csv", t, curves, names=names)
    save_json(
        out / "meta.json",
        {
            "case": args.case,
            "seed": args.seed,
            "response_sd": case.spec.response_sd,
            "snr": case.spec.snr,
            "target_scaling": {"mean": case.scaling.mean, "sd": case.scaling.sd},
        },
    )
    print(f"wrote case {args.case} (seed {args.seed}) to {out}")
    return EXIT_OK


def _parse_overrides(pairs: List[str]) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(value)
    return out


def cmd_train(args) -> int:
    overrides = _parse_overrides(args.set or [])
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if args.max_epochs is not None:
        overrides["train.max_epochs"] = args.max_epochs
    if args.patience is not None:
        overrides["train.patience"] = args.patience
    if args.out is not None:
        overrides["output_dir"] = args.out
    config = load_config(args.config, overrides)
    try:
        result = run_experiment(config, threads=args.threads)
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise ConfigError(str(exc)) from None
    header, body = comparison_table([result.output_dir])
    print(format_table(header, body), end="")
    print(f"results: {result.output_dir / 'results.csv'}")
    if result.failures:
        for r in result.failures:
            print(f"run {r.spec.run_id} failed: {r.error}", file=sys.stderr)
        raise TrainingError(f"{len(result.failures)} of {len(result.results)} runs failed")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    path = Path(args.checkpoint)
    if not path.exists():
        raise DataError(f"{path}: no such checkpoint")
    try:
        model, scaling = load_checkpoint(path)
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: unreadable checkpoint ({exc})") from None
    data = ingest_csv(args.data, model.task)
    model_grid = model.grid if model.family == "adafnn" else model.featurizer.grid
    if data.grid != model_grid:
        raise DataError(f"{args.data}: grid does not match the model grid")
    if scaling is not None:
        data = FunctionalDataset(data.grid, data.X, scaling.apply(data.y), data.task)
    metric = evaluate(model, data)
    name = "mse" if model.task == "regression" else "one_minus_auc"
    print(json.dumps({"metric": name, "value": metric, "n": len(data)}))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_bases

    for p in [args.dump] + ([args.truth] if args.truth else []):
        if not Path(p).exists():
            raise DataError(f"{p}: no such file")
    out = plot_bases(args.dump, args.out, truth=args.truth, title=args.title or "")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    for d in args.experiments:
        for f in ("config.json", "summary.csv"):
            if not (Path(d) / f).exists():
                raise DataError(f"{d}: missing {f}; is this an experiment directory?")
    header, body = comparison_table(args.experiments)
    print(format_table(header, body), end="")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(body)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adafnn", description="Adaptive functional neural networks: simulation and experiment harness.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-run progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate train/val/test CSVs for a simulation case")
    s.add_argument("--case", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--n-train", type=int, default=1500)
    s.add_argument("--n-val", type=int, default=300)
    s.add_argument("--n-test", type=int, default=300)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="run the experiment described by a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="experiment directory (overrides output_dir)")
    t.add_argument("--seeds", type=int, nargs="+")
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--threads", type=int, help="worker threads (default: $ADAFNN_THREADS or 1)")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key, e.g. train.lr=0.01")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on a dataset CSV")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("plot", help="render a basis dump as SVG")
    g.add_argument("--dump", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--truth", help="basis-format CSV of true signals to overlay")
    g.add_argument("--title")
    g.set_defaults(func=cmd_plot)

    r = sub.add_parser("report", help="method x source table from experiment directories")
    r.add_argument("experiments", nargs="+")
    r.add_argument("--out", help="also write the table as CSV")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
