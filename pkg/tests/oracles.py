"""Independent reference computations shared by the tests.

Finite differences are taken in extended precision: the package code is
dtype-preserving, so loading parameters as np.longdouble runs the whole loss
in 80-bit arithmetic and pushes the central-difference noise floor far below
the gradients being checked.
"""

from __future__ import annotations

import copy
from typing import Callable, Dict, Iterable, Tuple

import numpy as np

from adafnn.micronet import make_rng

Params = Dict[str, np.ndarray]


def to_longdouble(params: Params) -> None:
    for k in params:
        params[k] = np.asarray(params[k], dtype=np.longdouble)


def coords_to_check(shape: Tuple[int, ...], n: int, rng: np.random.Generator) -> Iterable[Tuple[int, ...]]:
    size = int(np.prod(shape))
    if size <= n:
        return list(np.ndindex(*shape))
    flat = rng.choice(size, size=n, replace=False)
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in flat]


def max_fd_error(
    loss: Callable[[], float], params: Params, grads: Params, h: float = 1e-5, n_coords: int = 8, seed: int = 0
) -> Tuple[float, str]:
    """Worst relative error between ``grads`` and central differences of ``loss``.

    ``params`` is perturbed in place (it must be the live parameter store
    ``loss`` reads). Relative error uses max(|analytic|, |fd|, 1e-8) as the
    scale, so gradients below 1e-8 are compared absolutely.
    """
    rng = make_rng(seed)
    worst, where = 0.0, ""
    for k in sorted(params):
        p = params[k]
        for idx in coords_to_check(p.shape, n_coords, rng):
            old = p[idx]
            p[idx] = old + h
            lp = loss()
            p[idx] = old - h
            lm = loss()
            p[idx] = old
            fd = float((lp - lm) / (2 * h))
            a = float(grads[k][idx])
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
            if err > worst:
                worst, where = err, f"{k}{list(idx)}: analytic {a:.6e} fd {fd:.6e}"
    return worst, where


def micronet_fd_error(net, x: np.ndarray, proj: np.ndarray, **kw) -> Tuple[float, str]:
    """Gradient check of L = sum(net(x) * proj) for a MicroNet in eval mode."""
    from adafnn.micronet import GradientTape

    tape = GradientTape()
    net.forward(x, tape=tape)
    grads, _ = net.backward(tape, proj)
    twin = copy.deepcopy(net)
    to_longdouble(twin.params)
    xl, pl = np.asarray(x, dtype=np.longdouble), np.asarray(proj, dtype=np.longdouble)
    return max_fd_error(lambda: np.sum(twin.forward(xl) * pl), twin.params, grads, **kw)


def model_fd_error(model, X: np.ndarray, y: np.ndarray, rng_seed: int = 5, **kw) -> Tuple[float, str]:
    """Gradient check of model.loss_and_grads (same pair/dropout draws on every call)."""
    _, _, grads = model.loss_and_grads(X, y, make_rng(rng_seed))
    twin = copy.deepcopy(model)
    for net in twin.nets().values():
        to_longdouble(net.params)
    Xl, yl = np.asarray(X, dtype=np.longdouble), np.asarray(y, dtype=np.longdouble)

    def loss():
        twin._cache = None
        return twin.loss_and_grads(Xl, yl, make_rng(rng_seed))[0]

    # parameters() hands out the nets' own arrays, so in-place perturbation reaches the model
    return max_fd_error(loss, twin.parameters(), grads, **kw)


# -- straight-line re-implementations ----------------------------------------


def forward_reference(params: Params, layers, x: np.ndarray) -> np.ndarray:
    """Eval-mode MLP forward written independently of MicroNet's code path."""
    acts = {
        "relu": lambda u: np.maximum(u, 0.0),
        "tanh": np.tanh,
        "sigmoid": lambda u: 1.0 / (1.0 + np.exp(-u)),
        "identity": lambda u: u,
    }
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    for i, spec in enumerate(layers):
        out = np.empty((h.shape[0], spec.width))
        for r in range(h.shape[0]):
            z = np.array([sum(params[f"W{i}"][o, c] * h[r, c] for c in range(h.shape[1])) + params[f"b{i}"][o] for o in range(spec.width)])
            if spec.normalization == "layer-norm":
                m = z.mean()
                v = ((z - m) ** 2).mean()
                z = (z - m) / np.sqrt(v + 1e-8) * params[f"g{i}"] + params[f"s{i}"]
            a = acts[spec.activation](z)
            out[r] = h[r] + a if spec.skip else a
        h = out
    return h


def trapezoid(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    w = np.zeros_like(t)
    for j in range(len(t) - 1):
        half = 0.5 * (t[j + 1] - t[j])
        w[j] += half
        w[j + 1] += half
    return w


def brute_force_auc(scores, labels) -> float:
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(pos) * len(neg))
