"""Fixed-representation pipelines: raw discretization, B-spline and FPCA scores.

Each pipeline maps a curve to a vector that is then fed to the same dense
head network as AdaFNN (see :class:`HeadModel`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .fda import FunctionalDataset, Grid, QuadratureRule, RuleKind, Task, make_quadrature
from .linalg import jacobi_eigh
from .micronet import GradientTape, LayerSpec, MicroNet, Params, weight_norm_penalty
from .model import TrainingError, base_loss, head_layers


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, FunctionalDataset):
        return data.X
    return np.atleast_2d(np.asarray(data, dtype=np.float64))


def raw_vector(sample) -> np.ndarray:
    values = getattr(sample, "values", sample)
    return np.array(values, dtype=np.float64, copy=True)


# -- B-splines ----------------------------------------------------------------


def bspline_design(t, knots: np.ndarray, degree: int) -> np.ndarray:
    """Cox-de Boor evaluation of every B-spline on a clamped knot vector.

    Returns an array of shape (len(t), len(knots) - degree - 1). The right end
    of the domain is included in the last non-empty interval.
    """
    t = np.asarray(t, dtype=np.float64)
    knots = np.asarray(knots, dtype=np.float64)
    n_basis = knots.size - degree - 1
    lo, hi = knots[degree], knots[-degree - 1]
    N = np.zeros((t.size, knots.size - 1))
    for i in range(knots.size - 1):
        if knots[i] < knots[i + 1]:
            N[:, i] = (knots[i] <= t) & (t < knots[i + 1])
    last = np.max(np.nonzero(knots[:-1] < knots[1:])[0])
    N[t == hi, :] = 0.0
    N[t == hi, last] = 1.0
    for d in range(1, degree + 1):
        nxt = np.zeros((t.size, knots.size - 1 - d))
        for i in range(knots.size - 1 - d):
            left = knots[i + d] - knots[i]
            right = knots[i + d + 1] - knots[i + 1]
            if left > 0:
                nxt[:, i] += (t - knots[i]) / left * N[:, i]
            if right > 0:
                nxt[:, i] += (knots[i + d + 1] - t) / right * N[:, i + 1]
        N = nxt
    outside = (t < lo) | (t > hi)
    N[outside] = 0.0
    return N[:, :n_basis]


class BSplineBasis:
    """Clamped B-spline basis with uniformly spaced interior knots over the grid range."""

    def __init__(self, grid: Grid, n_basis: int, degree: int = 3):
        if degree < 0:
            raise ValueError("degree must be non-negative")
        if n_basis < degree + 1:
            raise ValueError(f"need at least degree + 1 = {degree + 1} basis functions")
        if len(grid) < n_basis:
            raise ValueError(f"{n_basis} B-splines cannot be fitted on {len(grid)} grid points")
        self.grid = grid
        self.degree = degree
        self.n_basis = n_basis
        a, b = grid.points[0], grid.points[-1]
        n_interior = n_basis - degree - 1
        self.interior_knots = np.linspace(a, b, n_interior + 2)[1:-1]
        self.knots = np.concatenate([[a] * (degree + 1), self.interior_knots, [b] * (degree + 1)])
        self.design = bspline_design(grid.points, self.knots, degree)
        if np.linalg.matrix_rank(self.design) < n_basis:
            raise ValueError(f"B-spline design is rank deficient; K={n_basis} is too large for this grid")

    def evaluate(self, t) -> np.ndarray:
        return bspline_design(t, self.knots, self.degree)

    def fit(self, data) -> np.ndarray:
        """Least-squares coefficients, shape (n, K)."""
        X = _as_matrix(data)
        if X.shape[1] != len(self.grid):
            raise ValueError("curves do not match the basis grid")
        coefs, *_ = np.linalg.lstsq(self.design, X.T, rcond=None)
        return coefs.T

    def reconstruct(self, coefs: np.ndarray) -> np.ndarray:
        return np.atleast_2d(coefs) @ self.design.T


def bspline_fit(data, n_basis: int, degree: int = 3, grid: Optional[Grid] = None) -> Tuple[BSplineBasis, np.ndarray]:
    if grid is None:
        if not isinstance(data, FunctionalDataset):
            raise ValueError("a grid is required when fitting a raw matrix")
        grid = data.grid
    basis = BSplineBasis(grid, n_basis, degree)
    return basis, basis.fit(data)


# -- FPCA ---------------------------------------------------------------------


@dataclass
class FpcaModel:
    grid: Grid
    quad: QuadratureRule
    mean: np.ndarray
    eigenfunctions: np.ndarray  # (n_positive, J+1), rows unit quadrature norm
    eigenvalues: np.ndarray  # all positive eigenvalues, descending
    fve_threshold: float
    n_components: int

    @property
    def components(self) -> np.ndarray:
        return self.eigenfunctions[: self.n_components]

    def fve(self, k: int) -> float:
        """Fraction of variation explained by the first k components."""
        return float(np.sum(self.eigenvalues[:k]) / np.sum(self.eigenvalues))


def select_components(eigenvalues: np.ndarray, p: float) -> int:
    """Smallest K whose cumulative share of the eigenvalue sum reaches p."""
    cum = np.cumsum(eigenvalues) / np.sum(eigenvalues)
    k = int(np.searchsorted(cum, p - 1e-12) + 1)
    return min(k, eigenvalues.size)


def fpca_fit(data, fve: float = 0.9, quadrature: RuleKind = "trapezoid", grid: Optional[Grid] = None) -> FpcaModel:
    """Cross-sectional FPCA with quadrature-weighted eigenfunctions.

    Solves W^{1/2} C W^{1/2} u = lambda u for the empirical covariance C, maps back
    with psi = W^{-1/2} u (unit quadrature norm), and keeps the smallest number
    of components whose FVE reaches ``fve``.
    """
    if not 0.0 < fve <= 1.0:
        raise ValueError("FVE threshold must lie in (0, 1]")
    if grid is None:
        if not isinstance(data, FunctionalDataset):
            raise ValueError("a grid is required when fitting a raw matrix")
        grid = data.grid
    X = _as_matrix(data)
    if X.shape[0] < 2:
        raise ValueError("FPCA needs at least two curves")
    quad = make_quadrature(grid, quadrature)
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    sw = np.sqrt(quad.weights)
    vals, vecs = jacobi_eigh(sw[:, None] * cov * sw[None, :])
    tol = max(vals[0], 0.0) * vals.size * 1e-12
    positive = vals > tol
    if not np.any(positive):
        raise ValueError("all curves are identical; covariance is zero")
    vals = vals[positive]
    psi = (vecs[:, positive] / sw[:, None]).T
    psi /= np.sqrt(psi**2 @ quad.weights)[:, None]
    for row in psi:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    k = select_components(vals, fve)
    return FpcaModel(grid, quad, mean, psi, vals, fve, k)


def fpca_scores(model: FpcaModel, data) -> np.ndarray:
    X = _as_matrix(data)
    if X.shape[1] != len(model.grid):
        raise ValueError("curves do not match the FPCA grid")
    return ((X - model.mean) * model.quad.weights) @ model.components.T


# -- featurizers and head-only model ------------------------------------------


class RawFeatures:
    kind = "raw"

    def __init__(self, grid: Grid):
        self.grid = grid

    @property
    def label(self) -> str:
        return f"raw({len(self.grid)})"

    def fit(self, X: np.ndarray) -> "RawFeatures":
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != len(self.grid):
            raise ValueError("curves do not match the grid")
        return X.copy()

    @property
    def dim(self) -> int:
        return len(self.grid)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid": self.grid.points.tolist()}


class BSplineFeatures:
    kind = "bspline"

    def __init__(self, grid: Grid, n_basis: int, degree: int = 3):
        self.basis = BSplineBasis(grid, n_basis, degree)
        self.grid = grid

    @property
    def label(self) -> str:
        return f"bspline({self.basis.n_basis})"

    def fit(self, X: np.ndarray) -> "BSplineFeatures":
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        return self.basis.fit(X)

    @property
    def dim(self) -> int:
        return self.basis.n_basis

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid": self.grid.points.tolist(), "n_basis": self.basis.n_basis, "degree": self.basis.degree}


class FpcaFeatures:
    kind = "fpca"

    def __init__(self, grid: Grid, fve: float):
        self.grid = grid
        self.fve = fve
        self.model: Optional[FpcaModel] = None

    @property
    def label(self) -> str:
        return f"fpca({self.fve:g})"

    def fit(self, X: np.ndarray) -> "FpcaFeatures":
        self.model = fpca_fit(X, self.fve, grid=self.grid)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.model is None:
            raise RuntimeError("FPCA features used before fit")
        return fpca_scores(self.model, X)

    @property
    def dim(self) -> int:
        if self.model is None:
            raise RuntimeError("FPCA features used before fit")
        return self.model.n_components

    def to_dict(self) -> dict:
        m = self.model
        return {
            "kind": self.kind,
            "grid": self.grid.points.tolist(),
            "fve": self.fve,
            "mean": m.mean.tolist(),
            "eigenfunctions": m.components.tolist(),
            "eigenvalues": m.eigenvalues.tolist(),
            "quadrature": m.quad.kind,
        }


def featurizer_from_dict(d: dict):
    grid = Grid(d["grid"])
    if d["kind"] == "raw":
        return RawFeatures(grid)
    if d["kind"] == "bspline":
        return BSplineFeatures(grid, d["n_basis"], d["degree"])
    if d["kind"] == "fpca":
        f = FpcaFeatures(grid, d["fve"])
        psi = np.array(d["eigenfunctions"], dtype=np.float64)
        f.model = FpcaModel(
            grid,
            make_quadrature(grid, d["quadrature"]),
            np.array(d["mean"], dtype=np.float64),
            psi,
            np.array(d["eigenvalues"], dtype=np.float64),
            d["fve"],
            psi.shape[0],
        )
        return f
    raise ValueError(f"unknown featurizer {d['kind']!r}")


class HeadModel:
    """A fixed featurizer followed by a trainable dense head."""

    family = "baseline"

    def __init__(self, featurizer, head: Optional[Sequence[LayerSpec]] = None, task: Task = "regression", seed: int = 0, weight_decay: float = 0.0):
        self.featurizer = featurizer
        self.task = task
        self.weight_decay = weight_decay
        head = list(head) if head is not None else head_layers("large")
        self.head = MicroNet(featurizer.dim, head, seed=seed * 1009 + 997)

    @property
    def label(self) -> str:
        return self.featurizer.label

    def nets(self) -> dict:
        return {"head": self.head}

    def parameters(self) -> Params:
        return {f"head.{k}": v for k, v in self.head.params.items()}

    def set_parameters(self, values: Params) -> None:
        for k in self.head.params:
            self.head.params[k] = np.array(values[f"head.{k}"], dtype=np.float64)

    def train(self, mode: bool = True) -> "HeadModel":
        self.head.train(mode)
        return self

    def eval(self) -> "HeadModel":
        return self.train(False)

    def prepare(self, X: np.ndarray) -> np.ndarray:
        return self.featurizer.transform(X)

    def predict_features(self, F: np.ndarray) -> np.ndarray:
        was = self.head.training
        self.head.eval()
        try:
            return self.head.forward(np.atleast_2d(F))[:, 0]
        finally:
            self.head.train(was)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_features(self.prepare(X))

    def loss_and_grads(self, F: np.ndarray, y: np.ndarray, rng: np.random.Generator):
        tape = GradientTape()
        pred = self.head.forward(F, tape=tape, rng=rng)[:, 0]
        loss, gpred = base_loss(pred, y, self.task)
        parts = {"base": loss}
        g, _ = self.head.backward(tape, gpred[:, None])
        grads = {f"head.{k}": v for k, v in g.items()}
        total = loss
        if self.weight_decay > 0:
            pen, gpen = weight_norm_penalty(self.parameters())
            parts["weight_norm"] = pen
            total += self.weight_decay * pen
            for k, v in gpen.items():
                grads[k] = grads[k] + self.weight_decay * v
        if not math.isfinite(total):
            raise TrainingError(f"non-finite loss (parts: {parts})")
        return total, parts, grads

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "task": self.task,
            "weight_decay": self.weight_decay,
            "featurizer": self.featurizer.to_dict(),
            "nets": {"head": self.head.to_dict()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeadModel":
        feat = featurizer_from_dict(d["featurizer"])
        head = MicroNet.from_dict(d["nets"]["head"])
        model = cls(feat, head.layers, d["task"], weight_decay=d.get("weight_decay", 0.0))
        model.head = head
        return model
