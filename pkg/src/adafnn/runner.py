"""Experiment harness: expand a config into runs, train them on a thread pool, write artifacts.

Output layout (under the experiment directory)::

    config.json            resolved configuration
    results.csv            one row per run, deterministic order, no timing fields
    summary.csv            per-configuration means; '*' marks the selected AdaFNN setting
    failures.csv           runs that raised (absent when every run succeeded)
    runs/<run-id>/         fit_report.jsonl, checkpoint.json, basis.csv
"""

from __future__ import annotations

import csv
import logging
import math
import os
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import BSplineFeatures, FpcaFeatures, HeadModel, RawFeatures
from .config import ExperimentConfig, ModelConfig
from .fda import FunctionalDataset
from .io import ingest_csv, split_dataset, write_basis_csv
from .micronet import load_json, save_json
from .model import AdaFNN, BasisLayerConfig, RegularizerConfig, default_basis_layers, head_layers
from .simgen import TargetScaling, build_case
from .training import FitReport, evaluate, train

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "ADAFNN_OUTPUT_ROOT"
THREADS_ENV = "ADAFNN_THREADS"
RESULT_COLUMNS = ["method", "lambda1", "lambda2", "seed", "val_metric", "test_metric", "best_epoch"]
SUMMARY_COLUMNS = ["method", "lambda1", "lambda2", "n_runs", "n_failed", "mean_val_metric", "mean_test_metric", "median_test_metric", "selected"]


@dataclass(frozen=True)
class RunSpec:
    model_index: int
    method: str
    lambda1: Optional[float]  # None for baselines
    lambda2: Optional[float]
    seed: int

    @property
    def run_id(self) -> str:
        parts = [re.sub(r"[^A-Za-z0-9.]+", "-", self.method).strip("-")]
        if self.lambda1 is not None:
            parts.append(f"l1-{self.lambda1:g}_l2-{self.lambda2:g}")
        parts.append(f"seed{self.seed}")
        return "_".join(parts)


@dataclass
class RunResult:
    spec: RunSpec
    val_metric: Optional[float] = None
    test_metric: Optional[float] = None
    best_epoch: Optional[int] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class Splits:
    train: FunctionalDataset
    val: FunctionalDataset
    test: FunctionalDataset
    scaling: Optional[TargetScaling]


def method_label(m: ModelConfig) -> str:
    if m.type == "adafnn":
        return f"adafnn(d={m.n_bases})"
    if m.type == "bspline":
        return f"bspline({m.n_basis})"
    if m.type == "fpca":
        return f"fpca({m.fve:g})"
    return "raw"


def expand_runs(config: ExperimentConfig) -> List[RunSpec]:
    runs = []
    for i, m in enumerate(config.models):
        for l1, l2 in m.variants():
            for seed in config.seeds:
                lam = (l1, l2) if m.type == "adafnn" else (None, None)
                runs.append(RunSpec(i, method_label(m), lam[0], lam[1], seed))
    ids = [r.run_id for r in runs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate runs in configuration (same method, lambdas and seed)")
    return runs


def load_splits(config: ExperimentConfig, seed: int, dataset: Optional[FunctionalDataset] = None) -> Splits:
    """Train/val/test for one seed; regression targets standardized by training statistics."""
    src = config.source
    if src.simulation is not None:
        case = build_case(src.simulation, seed, src.n_train, src.n_val, src.n_test)
        return Splits(case.train, case.val, case.test, case.scaling)
    if dataset is None:
        dataset = ingest_csv(src.csv, src.task)
    tr, va, te = split_dataset(dataset, src.split, seed)
    if src.task == "classification":
        return Splits(tr, va, te, None)
    scaling = TargetScaling.fit(tr.y)
    std = [FunctionalDataset(d.grid, d.X, scaling.apply(d.y), d.task) for d in (tr, va, te)]
    return Splits(*std, scaling)


def build_model(config: ExperimentConfig, run: RunSpec, train_set: FunctionalDataset):
    m = config.models[run.model_index]
    head = head_layers(config.architecture)
    task = train_set.task
    if m.type == "adafnn":
        basis = BasisLayerConfig(m.n_bases, default_basis_layers(m.micro_dropout))
        reg = RegularizerConfig(run.lambda1, run.lambda2, pairs_per_batch=m.pairs_per_batch, weight_decay=config.weight_decay)
        return AdaFNN(train_set.grid, basis, reg, head, task, seed=run.seed)
    if m.type == "raw":
        feat = RawFeatures(train_set.grid)
    elif m.type == "bspline":
        feat = BSplineFeatures(train_set.grid, m.n_basis, m.degree)
    else:
        feat = FpcaFeatures(train_set.grid, m.fve)
    feat.fit(train_set.X)
    return HeadModel(feat, head, task, seed=run.seed, weight_decay=config.weight_decay)


def basis_dump(model) -> Optional[Tuple[np.ndarray, np.ndarray, str]]:
    """(t, curves, name prefix) describing the model's representation, if it has one."""
    if isinstance(model, AdaFNN):
        t, B = model.basis_table()
        return t, B, "beta"
    feat = model.featurizer
    if isinstance(feat, FpcaFeatures):
        return feat.grid.points, feat.model.components, "psi"
    if isinstance(feat, BSplineFeatures):
        t = feat.grid.points
        return t, feat.basis.evaluate(t).T, "bspline"
    return None


def save_checkpoint(path, model, scaling: Optional[TargetScaling], run: Optional[RunSpec] = None) -> None:
    payload = {
        "model": model.to_dict(),
        "target_scaling": None if scaling is None else {"mean": scaling.mean, "sd": scaling.sd},
    }
    if run is not None:
        payload["run"] = {"method": run.method, "lambda1": run.lambda1, "lambda2": run.lambda2, "seed": run.seed}
    save_json(path, payload)


def load_checkpoint(path):
    """Returns (model, target scaling or None)."""
    d = load_json(path)
    md = d["model"]
    model = AdaFNN.from_dict(md) if md["family"] == "adafnn" else HeadModel.from_dict(md)
    model.eval()
    sc = d.get("target_scaling")
    return model, None if sc is None else TargetScaling(sc["mean"], sc["sd"])


def execute_run(config: ExperimentConfig, run: RunSpec, splits: Splits, run_dir: Path) -> RunResult:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "error.txt").unlink(missing_ok=True)
    try:
        model = build_model(config, run, splits.train)
        report: FitReport = train(model, splits.train, splits.val, replace(config.train, seed=run.seed))
        val_metric = evaluate(model, splits.val)
        test_metric = evaluate(model, splits.test)
        report.test_metric = test_metric
        report.write(run_dir / "fit_report.jsonl")
        save_checkpoint(run_dir / "checkpoint.json", model, splits.scaling, run)
        dump = basis_dump(model)
        if dump is not None:
            write_basis_csv(run_dir / "basis.csv", *dump)
    except Exception as exc:  # one bad run must not sink the experiment
        msg = f"{type(exc).__name__}: {exc}"
        log.error("run %s failed: %s", run.run_id, msg)
        (run_dir / "error.txt").write_text(msg + "\n")
        return RunResult(run, error=msg)
    log.info("run %s: val %.4g test %.4g (best epoch %d)", run.run_id, val_metric, test_metric, report.best_epoch)
    return RunResult(run, val_metric, test_metric, report.best_epoch)


def resolve_output_dir(path) -> Path:
    path = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


@dataclass
class ExperimentResult:
    output_dir: Path
    results: List[RunResult]

    @property
    def failures(self) -> List[RunResult]:
        return [r for r in self.results if not r.ok]


def run_experiment(config: ExperimentConfig, output_dir=None, threads: Optional[int] = None) -> ExperimentResult:
    out = resolve_output_dir(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_json(out / "config.json", config.to_dict())
    runs = expand_runs(config)
    dataset = None
    if config.source.csv is not None:
        dataset = ingest_csv(config.source.csv, config.source.task)
    splits = {seed: load_splits(config, seed, dataset) for seed in config.seeds}
    n_threads = threads or default_threads()
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        futures = [pool.submit(execute_run, config, r, splits[r.seed], out / "runs" / r.run_id) for r in runs]
        results = [f.result() for f in futures]
    write_results_csv(out / "results.csv", results)
    write_summary_csv(out / "summary.csv", summarize(results))
    failed = [r for r in results if not r.ok]
    fpath = out / "failures.csv"
    if failed:
        with open(fpath, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run_id", "error"])
            for r in failed:
                w.writerow([r.spec.run_id, r.error])
    elif fpath.exists():
        fpath.unlink()
    return ExperimentResult(out, results)


# -- tables -------------------------------------------------------------------


def _num(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_results_csv(path, results: Sequence[RunResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            s = r.spec
            w.writerow([s.method, _num(s.lambda1), _num(s.lambda2), s.seed, _num(r.val_metric), _num(r.test_metric), _num(r.best_epoch)])


def read_results_csv(path) -> List[Dict[str, object]]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row: Dict[str, object] = {"method": rec["method"], "seed": int(rec["seed"])}
            for k in ("lambda1", "lambda2", "val_metric", "test_metric"):
                row[k] = float(rec[k]) if rec[k] else None
            row["best_epoch"] = int(rec["best_epoch"]) if rec["best_epoch"] else None
            rows.append(row)
    return rows


def summarize(results: Sequence[RunResult]) -> List[Dict[str, object]]:
    """Mean metrics per (method, lambda1, lambda2), in first-seen order.

    Within each AdaFNN method the configuration with the lowest mean
    validation metric gets the '*' marker.
    """
    groups: Dict[tuple, List[RunResult]] = {}
    for r in results:
        groups.setdefault((r.spec.method, r.spec.lambda1, r.spec.lambda2), []).append(r)
    rows = []
    for (method, l1, l2), rs in groups.items():
        ok = [r for r in rs if r.ok]
        rows.append(
            {
                "method": method,
                "lambda1": l1,
                "lambda2": l2,
                "n_runs": len(rs),
                "n_failed": len(rs) - len(ok),
                "mean_val_metric": float(np.mean([r.val_metric for r in ok])) if ok else None,
                "mean_test_metric": float(np.mean([r.test_metric for r in ok])) if ok else None,
                "median_test_metric": float(statistics.median([r.test_metric for r in ok])) if ok else None,
                "selected": "",
            }
        )
    for method in dict.fromkeys(row["method"] for row in rows if row["lambda1"] is not None):
        cands = [row for row in rows if row["method"] == method and row["mean_val_metric"] is not None]
        if cands:
            min(cands, key=lambda row: row["mean_val_metric"])["selected"] = "*"
    return rows


def write_summary_csv(path, rows: Sequence[Dict[str, object]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_num(row[c]) for c in SUMMARY_COLUMNS])


def read_summary_csv(path) -> List[Dict[str, object]]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row: Dict[str, object] = dict(rec)
            for k in ("lambda1", "lambda2", "mean_val_metric", "mean_test_metric", "median_test_metric"):
                row[k] = float(rec[k]) if rec[k] else None
            row["n_runs"], row["n_failed"] = int(rec["n_runs"]), int(rec["n_failed"])
            rows.append(row)
    return rows


def comparison_table(experiment_dirs: Sequence) -> Tuple[List[str], List[List[str]]]:
    """Method x source table of mean test metrics across experiment directories.

    AdaFNN rows report the selected (best-validation) lambda setting, written
    next to the value as ``*(lambda1,lambda2)``. Blank cells: method not run.
    """
    columns: List[str] = []
    cells: Dict[Tuple[str, str], str] = {}
    order: List[str] = []
    for d in experiment_dirs:
        d = Path(d)
        src = load_json(d / "config.json")["source"]
        label = f"case{src['simulation']}" if src.get("simulation") is not None else Path(src["csv"]).stem
        while label in columns:
            label += "'"
        columns.append(label)
        for row in read_summary_csv(d / "summary.csv"):
            tuned = row["lambda1"] is not None
            if tuned and row["selected"] != "*":
                continue
            method = row["method"]
            if method not in order:
                order.append(method)
            v = row["mean_test_metric"]
            text = "failed" if v is None or math.isnan(v) else f"{v:.4f}"
            if tuned:
                text += f" *({row['lambda1']:g},{row['lambda2']:g})"
            cells[(method, label)] = text
    header = ["method"] + columns
    body = [[m] + [cells.get((m, c), "") for c in columns] for m in order]
    return header, body


def format_table(header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header, *body]]
    return "\n".join(lines) + "\n"
