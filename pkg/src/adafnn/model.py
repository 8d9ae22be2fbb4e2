"""AdaFNN: a basis layer of micro networks scored against curves by quadrature."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .fda import Grid, QuadratureRule, RuleKind, Task, make_quadrature
from .micronet import GradientTape, LayerSpec, MicroNet, Params, mlp_layers, weight_norm_penalty


class TrainingError(RuntimeError):
    pass


def default_basis_layers(dropout_rate: float = 0.0) -> List[LayerSpec]:
    """3 hidden blocks of width 64, relu + layer norm, skip where widths match.

    Dropout is off by default: masks sampled per grid point turn each basis
    evaluation into a noisy function and training on Case 1 stalls.
    """
    return mlp_layers([64, 64, 64], 1, "relu", "layer-norm", dropout_rate, skip=True, input_dim=1)


HEAD_PRESETS = {
    "large": dict(widths=[128, 128, 128], dropout_rate=0.0),
    "small": dict(widths=[64, 64], dropout_rate=0.1),
}


def head_layers(preset: str = "large") -> List[LayerSpec]:
    cfg = HEAD_PRESETS[preset]
    return mlp_layers(cfg["widths"], 1, "relu", "none", cfg["dropout_rate"])


@dataclass
class BasisLayerConfig:
    n_bases: int = 2
    micro_layers: List[LayerSpec] = field(default_factory=default_basis_layers)
    quadrature: RuleKind = "trapezoid"

    def __post_init__(self):
        if self.n_bases < 1:
            raise ValueError("need at least one basis node")


@dataclass
class RegularizerConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    sparsify: Optional[Sequence[int]] = None  # 0-based basis indices; None means all
    pairs_per_batch: int = 10
    weight_decay: float = 0.0  # rho on ||vec(theta)||_2

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.weight_decay < 0:
            raise ValueError("regularization weights must be non-negative")
        if self.pairs_per_batch < 1:
            raise ValueError("pairs_per_batch must be positive")
        if self.sparsify is not None and self.lambda2 > 0 and len(self.sparsify) == 0:
            raise ValueError("sparsify set is empty while lambda2 > 0")


# -- regularizers -------------------------------------------------------------


def all_pairs(d: int) -> List[Tuple[int, int]]:
    return list(itertools.combinations(range(d), 2))


def sample_pairs(d: int, n_pairs: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Distinct unordered pairs drawn uniformly without replacement (0-based)."""
    if d < 2:
        raise ValueError("pair sampling needs at least two bases")
    pairs = all_pairs(d)
    if n_pairs >= len(pairs):
        return pairs
    idx = np.sort(rng.choice(len(pairs), size=n_pairs, replace=False))
    return [pairs[i] for i in idx]


def orthogonality_penalty(
    B: np.ndarray, q: QuadratureRule, pairs: Sequence[Tuple[int, int]], with_grad: bool = False
):
    """Mean |cosine similarity| over the given basis pairs.

    A pair involving a zero-norm row contributes 1 with zero gradient.
    """
    B = np.asarray(B)
    w = q.weights
    WB = B * w
    gram = WB @ B.T
    norms = np.sqrt(np.maximum(np.diag(gram), 0.0))
    total = 0.0
    grad = np.zeros_like(B) if with_grad else None
    for i, j in pairs:
        if i == j:
            raise ValueError("pairs must have distinct indices")
        ni, nj = norms[i], norms[j]
        if ni == 0.0 or nj == 0.0:
            total += 1.0
            continue
        cos = gram[i, j] / (ni * nj)
        total += abs(cos)
        if with_grad:
            sgn = np.sign(cos)
            grad[i] += sgn * (WB[j] / (ni * nj) - cos * WB[i] / (ni * ni))
            grad[j] += sgn * (WB[i] / (ni * nj) - cos * WB[j] / (nj * nj))
    n = len(pairs)
    if n == 0:
        return (0.0, grad) if with_grad else 0.0
    if with_grad:
        return total / n, grad / n
    return total / n


def sparsity_penalty(B: np.ndarray, q: QuadratureRule, subset: Optional[Sequence[int]] = None, with_grad: bool = False):
    """Mean over the chosen rows of the quadrature integral of |beta_i|."""
    B = np.asarray(B)
    rows = list(range(B.shape[0])) if subset is None else list(subset)
    if not rows:
        raise ValueError("sparsify set is empty")
    integrals = np.abs(B[rows]) @ q.weights
    value = integrals.mean()
    if not with_grad:
        return value
    grad = np.zeros_like(B)
    for r in rows:
        grad[r] += np.sign(B[r]) * q.weights / len(rows)
    return value, grad


# -- losses -------------------------------------------------------------------


def base_loss(pred: np.ndarray, y: np.ndarray, task: Task) -> Tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient w.r.t. predictions (logits)."""
    n = pred.shape[0]
    if task == "regression":
        r = pred - y
        return np.mean(r * r), 2.0 * r / n
    # logistic cross-entropy on logits, computed stably
    loss = np.logaddexp(0.0, pred) - y * pred
    p = 0.5 * (1.0 + np.tanh(0.5 * pred))
    return np.mean(loss), (p - y) / n


# -- model --------------------------------------------------------------------


class AdaFNN:
    """Basis layer of ``n_bases`` micro networks followed by a dense head.

    Each basis network maps a scalar t to beta_i(t). A curve X observed on the
    model grid is reduced to scores c_i = sum_j w_j beta_i(t_j) X(t_j), and
    the head maps the score vector to a prediction (a logit for
    classification).
    """

    family = "adafnn"

    def __init__(
        self,
        grid: Grid,
        basis: Optional[BasisLayerConfig] = None,
        regularizer: Optional[RegularizerConfig] = None,
        head: Optional[Sequence[LayerSpec]] = None,
        task: Task = "regression",
        seed: int = 0,
    ):
        self.grid = grid
        self.basis = basis or BasisLayerConfig()
        self.reg = regularizer or RegularizerConfig()
        self.task = task
        self.quad = make_quadrature(grid, self.basis.quadrature)
        d = self.basis.n_bases
        if self.reg.lambda1 > 0 and d < 2:
            raise ValueError("orthogonality penalty needs at least two bases")
        if self.reg.sparsify is not None and any(not 0 <= s < d for s in self.reg.sparsify):
            raise ValueError("sparsify indices out of range")
        micro = list(self.basis.micro_layers)
        if micro[-1].width != 1:
            raise ValueError("basis networks must have scalar output")
        self.basis_nets = [MicroNet(1, micro, seed=seed * 1009 + 17 * i + 1) for i in range(d)]
        head = list(head) if head is not None else head_layers("large")
        if head[-1].width != 1:
            raise ValueError("head must have a single output")
        self.head = MicroNet(d, head, seed=seed * 1009 + 997)
        self._cache: Optional[np.ndarray] = None

    @property
    def n_bases(self) -> int:
        return len(self.basis_nets)

    def nets(self) -> Dict[str, MicroNet]:
        out = {f"basis{i}": net for i, net in enumerate(self.basis_nets)}
        out["head"] = self.head
        return out

    def parameters(self) -> Params:
        return {f"{name}.{k}": v for name, net in self.nets().items() for k, v in net.params.items()}

    def set_parameters(self, values: Params) -> None:
        for name, net in self.nets().items():
            for k in net.params:
                net.params[k] = np.array(values[f"{name}.{k}"], dtype=np.float64)
        self._cache = None

    def train(self, mode: bool = True) -> "AdaFNN":
        for net in self.nets().values():
            net.train(mode)
        self._cache = None
        return self

    def eval(self) -> "AdaFNN":
        return self.train(False)

    def prepare(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.grid):
            raise ValueError(f"curves have {X.shape[-1]} points, model grid has {len(self.grid)}")
        return X

    def evaluate_bases(
        self,
        grid: Optional[Grid] = None,
        tapes: Optional[List[GradientTape]] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """Matrix B with B[i, j] = beta_i(t_j), shape (d, len(grid))."""
        use_cache = grid is None and tapes is None and not self.head.training
        if use_cache and self._cache is not None:
            return self._cache
        t = (grid or self.grid).points[:, None]
        rows = []
        for i, net in enumerate(self.basis_nets):
            tape = None if tapes is None else tapes[i]
            rows.append(net.forward(t, tape=tape, rng=rng)[:, 0])
        B = np.stack(rows)
        if not np.all(np.isfinite(B)):
            raise TrainingError("basis evaluation produced non-finite values")
        if use_cache:
            self._cache = B
        return B

    def scores(self, X: np.ndarray, B: Optional[np.ndarray] = None) -> np.ndarray:
        X = self.prepare(X)
        if B is None:
            B = self.evaluate_bases()
        return (X * self.quad.weights) @ B.T

    def predict(self, X: np.ndarray) -> np.ndarray:
        was_training = self.head.training
        self.eval()
        try:
            c = self.scores(X)
            return self.head.forward(np.atleast_2d(c))[:, 0]
        finally:
            self.train(was_training)

    predict_features = predict

    @property
    def label(self) -> str:
        return f"adafnn({self.reg.lambda1:g},{self.reg.lambda2:g})"

    def forward(self, X: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Predictions in the current mode (dropout active when training)."""
        B = self.evaluate_bases(rng=rng)
        return self.head.forward(np.atleast_2d(self.scores(X, B)), rng=rng)[:, 0]

    def loss_and_grads(
        self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator
    ) -> Tuple[float, Dict[str, float], Params]:
        """Regularized batch loss, its parts, and gradients for every parameter."""
        self._cache = None
        X = self.prepare(X)
        y = np.asarray(y)
        d = self.n_bases
        tapes = [GradientTape() for _ in range(d)]
        B = self.evaluate_bases(tapes=tapes, rng=rng)
        XW = X * self.quad.weights
        C = XW @ B.T
        head_tape = GradientTape()
        pred = self.head.forward(C, tape=head_tape, rng=rng)[:, 0]
        loss, gpred = base_loss(pred, y, self.task)
        parts = {"base": loss}
        head_grads, gC = self.head.backward(head_tape, gpred[:, None])
        gB = gC.T @ XW
        total = loss
        if self.reg.lambda1 > 0:
            pairs = sample_pairs(d, self.reg.pairs_per_batch, rng)
            pen, gpen = orthogonality_penalty(B, self.quad, pairs, with_grad=True)
            parts["orthogonality"] = pen
            total += self.reg.lambda1 * pen
            gB += self.reg.lambda1 * gpen
        if self.reg.lambda2 > 0:
            pen, gpen = sparsity_penalty(B, self.quad, self.reg.sparsify, with_grad=True)
            parts["sparsity"] = pen
            total += self.reg.lambda2 * pen
            gB += self.reg.lambda2 * gpen
        grads: Params = {f"head.{k}": v for k, v in head_grads.items()}
        for i, net in enumerate(self.basis_nets):
            g, _ = net.backward(tapes[i], gB[i][:, None])
            grads.update({f"basis{i}.{k}": v for k, v in g.items()})
        if self.reg.weight_decay > 0:
            pen, gpen = weight_norm_penalty(self.parameters())
            parts["weight_norm"] = pen
            total += self.reg.weight_decay * pen
            for k, v in gpen.items():
                grads[k] = grads[k] + self.reg.weight_decay * v
        if not math.isfinite(total):
            raise TrainingError(f"non-finite loss (parts: {parts})")
        return total, parts, grads

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "task": self.task,
            "grid": self.grid.points.tolist(),
            "quadrature": self.basis.quadrature,
            "regularizer": {
                "lambda1": self.reg.lambda1,
                "lambda2": self.reg.lambda2,
                "sparsify": None if self.reg.sparsify is None else list(self.reg.sparsify),
                "pairs_per_batch": self.reg.pairs_per_batch,
                "weight_decay": self.reg.weight_decay,
            },
            "nets": {name: net.to_dict() for name, net in self.nets().items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaFNN":
        nets = {k: MicroNet.from_dict(v) for k, v in d["nets"].items()}
        n_bases = sum(1 for k in nets if k.startswith("basis"))
        basis = BasisLayerConfig(n_bases, nets["basis0"].layers, d["quadrature"])
        model = cls(Grid(d["grid"]), basis, RegularizerConfig(**d["regularizer"]), nets["head"].layers, d["task"])
        model.basis_nets = [nets[f"basis{i}"] for i in range(n_bases)]
        model.head = nets["head"]
        return model

    def basis_table(self, grid: Optional[Grid] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(t, B) in eval mode, ready for a basis dump."""
        was_training = self.head.training
        self.eval()
        try:
            g = grid or self.grid
            return g.points.copy(), self.evaluate_bases(g).copy()
        finally:
            self.train(was_training)
