"""A small feed-forward network engine with hand-written reverse-mode gradients.

Networks are stacks of dense blocks. Each block computes

    z = h W^T + b -> [layer norm] -> activation -> [dropout] -> (+ h if skip)

Forward passes optionally record a :class:`GradientTape`; :meth:`MicroNet.backward`
replays it in reverse to produce parameter gradients and the gradient with
respect to the input. Arrays are row-batched; arithmetic follows the parameter
dtype (float64 in normal use).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

Params = Dict[str, np.ndarray]

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")
NORMALIZATIONS = ("none", "layer-norm")
LN_EPS = 1e-8


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator; the one PRNG used throughout the package."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str = "relu"
    normalization: str = "none"
    dropout_rate: float = 0.0
    skip: bool = False

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("layer width must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


class NonFiniteError(FloatingPointError):
    def __init__(self, layer: int, where: str = "output"):
        super().__init__(f"non-finite values in layer {layer} {where}")
        self.layer = layer


class TapeReuseError(RuntimeError):
    pass


class GradientTape:
    """Per-layer caches from one forward pass. Single use."""

    def __init__(self):
        self.records: List[dict] = []
        self.consumed = False
        self.owner: Optional[int] = None


def _activate(u: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(u, 0.0)
    if kind == "tanh":
        return np.tanh(u)
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * u))
    return u


def _activation_grad(u: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (u > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(u)


class MicroNet:
    """Feed-forward network mapping R^input_dim -> R^output_dim.

    ``layers[-1].width`` is the output dimension. A block may only use
    ``skip=True`` when its input and output widths agree.
    """

    def __init__(self, input_dim: int, layers: Sequence[LayerSpec], seed: int = 0):
        if input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not layers:
            raise ValueError("at least one layer is required")
        self.input_dim = int(input_dim)
        self.layers = list(layers)
        fan_in = self.input_dim
        for i, spec in enumerate(self.layers):
            if spec.skip and spec.width != fan_in:
                raise ValueError(f"layer {i}: skip connection needs equal widths ({fan_in} != {spec.width})")
            fan_in = spec.width
        self.training = False
        self.rng = make_rng(seed + 7919)
        self.params: Params = {}
        self._init_params(make_rng(seed))

    @property
    def output_dim(self) -> int:
        return self.layers[-1].width

    def _init_params(self, rng: np.random.Generator) -> None:
        fan_in = self.input_dim
        for i, spec in enumerate(self.layers):
            fan_out = spec.width
            if spec.activation == "relu":
                limit = math.sqrt(6.0 / fan_in)
            else:
                limit = math.sqrt(6.0 / (fan_in + fan_out))
            self.params[f"W{i}"] = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            # bias range as in the usual torch default: zero biases would make
            # a scalar-input first layer homogeneous in t
            blim = 1.0 / math.sqrt(fan_in)
            self.params[f"b{i}"] = rng.uniform(-blim, blim, size=fan_out)
            if spec.normalization == "layer-norm":
                self.params[f"g{i}"] = np.ones(fan_out)
                self.params[f"s{i}"] = np.zeros(fan_out)
            fan_in = fan_out

    def train(self, mode: bool = True) -> "MicroNet":
        self.training = mode
        return self

    def eval(self) -> "MicroNet":
        return self.train(False)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grads(self) -> Params:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(
        self,
        x,
        tape: Optional[GradientTape] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """Evaluate the network on a vector or on a batch of row vectors."""
        h = np.asarray(x)
        if not np.issubdtype(h.dtype, np.floating):
            h = h.astype(np.float64)
        squeeze = h.ndim == 1
        if squeeze:
            h = h[None, :]
        if h.shape[1] != self.input_dim:
            raise ValueError(f"expected input dimension {self.input_dim}, got {h.shape[1]}")
        if tape is not None:
            if tape.records or tape.consumed:
                raise TapeReuseError("tape already holds a forward pass")
            tape.owner = id(self)
        rng = rng if rng is not None else self.rng
        for i, spec in enumerate(self.layers):
            W, b = self.params[f"W{i}"], self.params[f"b{i}"]
            z = h @ W.T + b
            rec = {"h": h}
            if spec.normalization == "layer-norm":
                mu = z.mean(axis=1, keepdims=True)
                zc = z - mu
                inv_std = 1.0 / np.sqrt((zc * zc).mean(axis=1, keepdims=True) + LN_EPS)
                xhat = zc * inv_std
                u = xhat * self.params[f"g{i}"] + self.params[f"s{i}"]
                rec["xhat"], rec["inv_std"] = xhat, inv_std
            else:
                u = z
            a = _activate(u, spec.activation)
            rec["u"], rec["a"] = u, a
            if self.training and spec.dropout_rate > 0:
                keep = 1.0 - spec.dropout_rate
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
                rec["mask"] = mask
            out = h + a if spec.skip else a
            if not np.all(np.isfinite(out)):
                raise NonFiniteError(i)
            if tape is not None:
                tape.records.append(rec)
            h = out
        return h[0] if squeeze else h

    __call__ = forward

    def backward(self, tape: GradientTape, grad_output) -> Tuple[Params, np.ndarray]:
        """Return (parameter gradients, input gradient) for the taped pass."""
        if tape.consumed:
            raise TapeReuseError("tape has already been used for a backward pass")
        if tape.owner != id(self) or len(tape.records) != len(self.layers):
            raise TapeReuseError("tape was not produced by this network")
        tape.consumed = True
        g = np.asarray(grad_output)
        squeeze = g.ndim == 1
        if squeeze:
            g = g[None, :]
        grads = self.zero_grads()
        for i in range(len(self.layers) - 1, -1, -1):
            spec, rec = self.layers[i], tape.records[i]
            ga = g * rec["mask"] if "mask" in rec else g
            gu = ga * _activation_grad(rec["u"], rec["a"], spec.activation)
            if spec.normalization == "layer-norm":
                xhat = rec["xhat"]
                grads[f"g{i}"] = np.sum(gu * xhat, axis=0)
                grads[f"s{i}"] = np.sum(gu, axis=0)
                gx = gu * self.params[f"g{i}"]
                gz = rec["inv_std"] * (
                    gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(axis=1, keepdims=True)
                )
            else:
                gz = gu
            grads[f"W{i}"] = gz.T @ rec["h"]
            grads[f"b{i}"] = gz.sum(axis=0)
            gh = gz @ self.params[f"W{i}"]
            g = gh + g if spec.skip else gh
        tape.records = []
        return grads, (g[0] if squeeze else g)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": [asdict(s) for s in self.layers],
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MicroNet":
        net = cls(d["input_dim"], [LayerSpec(**s) for s in d["layers"]])
        for k, v in d["params"].items():
            arr = np.array(v, dtype=np.float64)
            if k not in net.params or arr.shape != net.params[k].shape:
                raise ValueError(f"parameter {k} does not match the architecture")
            net.params[k] = arr
        return net


def mlp_layers(
    widths: Sequence[int],
    output_dim: int = 1,
    activation: str = "relu",
    normalization: str = "none",
    dropout_rate: float = 0.0,
    skip: bool = False,
    input_dim: Optional[int] = None,
) -> List[LayerSpec]:
    """Hidden blocks of the given widths followed by a linear output layer.

    ``skip`` is only applied to blocks whose input width matches their output.
    """
    layers = []
    prev = input_dim
    for w in widths:
        layers.append(LayerSpec(w, activation, normalization, dropout_rate, skip and prev == w))
        prev = w
    layers.append(LayerSpec(output_dim, "identity"))
    return layers


# -- optimizers ---------------------------------------------------------------


def _check_shapes(params: Params, grads: Params) -> None:
    for k, g in grads.items():
        if k not in params:
            raise KeyError(f"gradient for unknown parameter {k!r}")
        if params[k].shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {k!r} {params[k].shape}")


class Adam:
    """Adam with bias correction. Updates parameter arrays in place."""

    def __init__(self, lr: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: Params = {}
        self.v: Params = {}

    def step(self, params: Params, grads: Params) -> None:
        _check_shapes(params, grads)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params: Params, grads: Params, state: Optional[Adam] = None, lr=1e-3, betas=(0.9, 0.999), eps=1e-8) -> Adam:
    state = state if state is not None else Adam(lr, betas, eps)
    state.step(params, grads)
    return state


class DecayingSGD:
    """Plain SGD with step size min(max_lr, c / t), t counted from 1."""

    def __init__(self, c: float = 1.0, max_lr: Optional[float] = None):
        if c <= 0:
            raise ValueError("rate constant must be positive")
        self.c = c
        self.max_lr = c if max_lr is None else max_lr
        self.t = 0

    def rate(self, t: int) -> float:
        if t < 1:
            raise ValueError("step index starts at 1")
        return min(self.max_lr, self.c / t)

    def step(self, params: Params, grads: Params) -> None:
        _check_shapes(params, grads)
        self.t += 1
        alpha = self.rate(self.t)
        for k, g in grads.items():
            params[k] -= alpha * g


def sgd_step(params: Params, grads: Params, t: int, c: float, max_lr: Optional[float] = None) -> None:
    opt = DecayingSGD(c, max_lr)
    opt.t = t - 1
    opt.step(params, grads)


def weight_norm_penalty(params: Params) -> Tuple[float, Params]:
    """Euclidean norm of all parameters concatenated, and its gradient."""
    sq = sum(float(np.sum(p * p)) for p in params.values())
    norm = math.sqrt(sq)
    if norm == 0.0:
        return 0.0, {k: np.zeros_like(p) for k, p in params.items()}
    return norm, {k: p / norm for k, p in params.items()}


# -- checkpoints --------------------------------------------------------------


def save_json(path: Union[str, Path], payload: dict) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(payload, allow_nan=False))


def load_json(path: Union[str, Path]) -> dict:
    return json.loads(Path(path).read_text())
