"""Mini-batch training with epoch-level early stopping, and evaluation metrics."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .fda import FunctionalDataset
from .micronet import Adam, DecayingSGD, make_rng
from .model import TrainingError, base_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    max_epochs: int = 500
    patience: int = 200
    batch_size: int = 128
    optimizer: str = "adam"  # "adam" or "sgd" (step size min(lr, c/t))
    lr: float = 1e-3
    sgd_c: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if not 0 < self.patience <= self.max_epochs:
            raise ValueError("patience must lie in [1, max_epochs]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    def make_optimizer(self):
        if self.optimizer == "adam":
            return Adam(self.lr)
        return DecayingSGD(self.sgd_c, max_lr=self.lr)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class FitReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    wall_clock: float = 0.0
    test_metric: Optional[float] = None
    stopped_early: bool = False

    def write(self, path: Union[str, Path]) -> None:
        """One JSON record per epoch, then a summary record."""
        lines = [json.dumps({"type": "epoch", **asdict(r)}) for r in self.epochs]
        lines.append(
            json.dumps(
                {
                    "type": "summary",
                    "best_epoch": self.best_epoch,
                    "best_val_loss": self.best_val_loss,
                    "test_metric": self.test_metric,
                    "stopped_early": self.stopped_early,
                    "wall_clock": self.wall_clock,
                }
            )
        )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path: Union[str, Path]) -> "FitReport":
        rep = cls()
        for line in Path(path).read_text().splitlines():
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "epoch":
                rep.epochs.append(EpochRecord(**rec))
            else:
                for k, v in rec.items():
                    setattr(rep, k, v)
        return rep


def _snapshot(model) -> dict:
    return {k: v.copy() for k, v in model.parameters().items()}


def train(model, train_set: FunctionalDataset, val_set: FunctionalDataset, config: TrainConfig) -> FitReport:
    """Fit ``model`` in place; on return it holds the best-validation parameters.

    The validation criterion is the unregularized base loss in eval mode.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if train_set.grid != val_set.grid:
        raise ValueError("training and validation sets must share a grid")
    if train_set.y is None or val_set.y is None:
        raise ValueError("datasets need responses for training")
    start = time.perf_counter()
    rng = make_rng(config.seed)
    opt = config.make_optimizer()
    F_train, y_train = model.prepare(train_set.X), train_set.y
    F_val, y_val = model.prepare(val_set.X), val_set.y
    n = len(train_set)
    report = FitReport()
    best_params = _snapshot(model)
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        perm = rng.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            idx = perm[lo : lo + config.batch_size]
            try:
                loss, _, grads = model.loss_and_grads(F_train[idx], y_train[idx], rng)
            except (TrainingError, FloatingPointError) as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from exc
            opt.step(model.parameters(), grads)
            total += float(loss) * idx.size
        model.eval()
        val_loss = float(base_loss(model.predict_features(F_val), y_val, model.task)[0])
        if not math.isfinite(val_loss):
            raise TrainingError(f"epoch {epoch}: non-finite validation loss")
        report.epochs.append(EpochRecord(epoch, total / n, val_loss))
        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best_params = _snapshot(model)
        elif epoch - report.best_epoch >= config.patience:
            report.stopped_early = True
            break
    model.set_parameters(best_params)
    model.eval()
    report.wall_clock = time.perf_counter() - start
    log.debug("trained %d epochs, best epoch %d (val %.4g)", len(report.epochs), report.best_epoch, report.best_val_loss)
    return report


# -- metrics ------------------------------------------------------------------


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {y.size} targets")
    return float(np.mean((p - y) ** 2))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """P(random positive outranks random negative), ties counted one half."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both classes")
    ranks = _average_ranks(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(model, dataset: FunctionalDataset, task: Optional[str] = None) -> float:
    """MSE for regression, 1 - AUC for classification (lower is better)."""
    task = task or dataset.task
    if task != model.task:
        raise ValueError(f"model was trained for {model.task}, asked to evaluate {task}")
    if dataset.y is None:
        raise ValueError("dataset has no responses")
    pred = model.predict(dataset.X)
    if task == "regression":
        return mse(pred, dataset.y)
    return 1.0 - roc_auc(pred, dataset.y)
