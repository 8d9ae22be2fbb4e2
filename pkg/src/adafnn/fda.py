"""Dense functional observations on a shared grid and quadrature inner products."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Literal, Optional, Sequence

import numpy as np

RuleKind = Literal["trapezoid", "rectangle"]
Task = Literal["regression", "classification"]


class GridError(ValueError):
    pass


class Grid:
    """Strictly increasing time points t_1 < ... < t_{J+1} inside [0, 1]."""

    def __init__(self, points: Sequence[float]):
        pts = np.array(points, dtype=np.float64).ravel()
        if pts.size < 3:
            raise GridError(f"grid needs at least 3 points, got {pts.size}")
        if not np.all(np.isfinite(pts)):
            raise GridError("grid contains non-finite values")
        if np.any(np.diff(pts) <= 0):
            raise GridError("grid points must be strictly increasing")
        if pts[0] < 0.0 or pts[-1] > 1.0:
            raise GridError("grid points must lie in [0, 1]")
        pts.setflags(write=False)
        self.points = pts

    @classmethod
    def uniform(cls, n_points: int) -> "Grid":
        return cls(np.linspace(0.0, 1.0, n_points))

    @property
    def resolution(self) -> int:
        """Number of intervals J."""
        return self.points.size - 1

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.all(self.points == other.points))

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        return f"Grid(n={len(self)}, [{self.points[0]:g}, {self.points[-1]:g}])"


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    grid: Grid
    weights: np.ndarray
    kind: RuleKind

    def __len__(self) -> int:
        return self.weights.size


def make_quadrature(grid: Grid, kind: RuleKind = "trapezoid") -> QuadratureRule:
    """Integration weights on ``grid``.

    Trapezoid weights are (t_{j+1} - t_{j-1}) / 2 with half intervals at the
    two ends. The rectangle rule gives each point the width of the interval to
    its left; the first interval is split between the first two points so
    every weight stays positive and the total is the domain length.
    """
    if not isinstance(grid, Grid):
        grid = Grid(grid)
    t = grid.points
    h = np.diff(t)
    if kind == "trapezoid":
        w = np.empty_like(t)
        w[0] = h[0] / 2
        w[-1] = h[-1] / 2
        w[1:-1] = (t[2:] - t[:-2]) / 2
    elif kind == "rectangle":
        w = np.concatenate([[h[0] / 2], h])
        w[1] -= h[0] / 2
    else:
        raise ValueError(f"unknown quadrature kind {kind!r}")
    w.setflags(write=False)
    return QuadratureRule(grid=grid, weights=w, kind=kind)


def _check_len(a: np.ndarray, q: QuadratureRule) -> None:
    if a.shape[-1] != len(q):
        raise ValueError(f"values have length {a.shape[-1]}, quadrature grid has {len(q)}")


def inner_product(a, b, q: QuadratureRule):
    """Sum_j w_j a_j b_j. Broadcasts over leading axes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_len(a, q)
    _check_len(b, q)
    return np.sum(q.weights * a * b, axis=-1)


def l2_norm(a, q: QuadratureRule):
    return np.sqrt(np.maximum(inner_product(a, a, q), 0.0))


@dataclass(frozen=True)
class FunctionalSample:
    values: np.ndarray
    response: Optional[float] = None
    grid_ref: Optional[Grid] = field(default=None, repr=False)


class FunctionalDataset:
    """Curves observed on a common grid, stored as an (n, J+1) matrix."""

    def __init__(self, grid: Grid, X, y=None, task: Task = "regression"):
        X = np.array(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be 2-D (samples x grid points)")
        if X.shape[0] == 0:
            raise ValueError("dataset is empty")
        if X.shape[1] != len(grid):
            raise ValueError(f"curves have {X.shape[1]} values, grid has {len(grid)} points")
        if not np.all(np.isfinite(X)):
            raise ValueError("curves contain non-finite values")
        if task not in ("regression", "classification"):
            raise ValueError(f"unknown task {task!r}")
        if y is not None:
            y = np.array(y, dtype=np.float64).ravel()
            if y.shape[0] != X.shape[0]:
                raise ValueError("response length does not match number of curves")
            if not np.all(np.isfinite(y)):
                raise ValueError("responses contain non-finite values")
            if task == "classification" and not np.all((y == 0) | (y == 1)):
                raise ValueError("classification responses must be 0 or 1")
        self.grid = grid
        self.X = X
        self.y = y
        self.task = task

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def samples(self) -> Iterator[FunctionalSample]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> FunctionalSample:
        resp = None if self.y is None else float(self.y[i])
        return FunctionalSample(self.X[i], resp, self.grid)

    def subset(self, idx) -> "FunctionalDataset":
        return FunctionalDataset(
            self.grid, self.X[idx], None if self.y is None else self.y[idx], self.task
        )
