"""CSV formats shared by the generators, the runner and the plotting code.

Dataset CSV: first row is the grid t_1..t_{J+1}; every following row holds
X(t_1)..X(t_{J+1}) and the response Y. Basis dump: header ``t,<name>_1,...``
followed by one row per grid point.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .fda import FunctionalDataset, Grid, GridError, Task
from .micronet import make_rng

PathLike = Union[str, Path]


class DataError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset_csv(path: PathLike, dataset: FunctionalDataset) -> None:
    if dataset.y is None:
        raise ValueError("dataset CSVs carry a response column")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([_fmt(t) for t in dataset.grid.points])
        for x, y in zip(dataset.X, dataset.y):
            w.writerow([_fmt(v) for v in x] + [_fmt(y)])


def _parse_row(row: List[str], lineno: int) -> List[float]:
    out = []
    for cell in row:
        try:
            v = float(cell)
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric cell {cell!r}") from None
        if not math.isfinite(v):
            raise DataError(f"line {lineno}: non-finite cell {cell!r}")
        out.append(v)
    return out


def ingest_csv(path: PathLike, task: Task = "regression") -> FunctionalDataset:
    """Read a dataset CSV, validating shape, numbers and the grid."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataError(f"{path}: need a grid row and at least one curve")
    lineno, first = rows[0]
    try:
        grid = Grid(_parse_row(first, lineno))
    except GridError as exc:
        raise DataError(f"line {lineno}: invalid grid: {exc}") from None
    width = len(grid) + 1
    X, y = [], []
    for lineno, row in rows[1:]:
        if len(row) != width:
            raise DataError(f"line {lineno}: expected {width} fields (curve + response), found {len(row)}")
        vals = _parse_row(row, lineno)
        X.append(vals[:-1])
        y.append(vals[-1])
    y = np.array(y)
    if task == "classification" and not np.all((y == 0) | (y == 1)):
        bad = next(i for i, v in enumerate(y) if v not in (0.0, 1.0))
        raise DataError(f"line {rows[bad + 1][0]}: classification responses must be 0 or 1")
    return FunctionalDataset(grid, np.array(X), y, task)


def split_dataset(
    dataset: FunctionalDataset, fractions: Sequence[float] = (0.7, 0.15, 0.15), seed: int = 0
) -> Tuple[FunctionalDataset, FunctionalDataset, FunctionalDataset]:
    """Seeded shuffle, then cut into train/val/test by the given fractions."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must be three positive numbers summing to 1")
    n = len(dataset)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n_train < 1 or n_val < 1 or n - n_train - n_val < 1:
        raise DataError(f"{n} samples are too few for a train/val/test split")
    perm = make_rng(seed).permutation(n)
    return (
        dataset.subset(perm[:n_train]),
        dataset.subset(perm[n_train : n_train + n_val]),
        dataset.subset(perm[n_train + n_val :]),
    )


def write_basis_csv(
    path: PathLike, t: np.ndarray, curves: np.ndarray, prefix: str = "beta", names: Optional[Sequence[str]] = None
) -> None:
    curves = np.atleast_2d(curves)
    if names is None:
        names = [f"{prefix}_{i + 1}" for i in range(curves.shape[0])]
    elif len(names) != curves.shape[0]:
        raise ValueError("one name per curve is required")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for j, tj in enumerate(t):
            w.writerow([_fmt(tj)] + [_fmt(v) for v in curves[:, j]])


def read_basis_csv(path: PathLike) -> Tuple[List[str], np.ndarray, np.ndarray]:
    """Returns (curve names, t, curves with shape (n_curves, n_points))."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 3:
        raise DataError(f"{path}: basis dump needs a header and at least two rows")
    header = rows[0]
    if header[0] != "t" or len(header) < 2:
        raise DataError(f"{path}: header must start with 't' followed by curve names")
    body = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, found {len(r)}")
        body.append(_parse_row(r, lineno))
    arr = np.array(body)
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise DataError(f"{path}: t column must be strictly increasing")
    return header[1:], arr[:, 0], arr[:, 1:].T
