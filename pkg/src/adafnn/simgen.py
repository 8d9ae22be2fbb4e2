"""Seeded generators for the five simulation cases.

Curves are X(t) = sum_{k=1}^{50} c_k phi_k(t) with phi_1 = 1,
phi_k(t) = sqrt(2) cos((k-1) pi t), c_k = z_k r_k and r_k ~ U[-sqrt(3), sqrt(3)],
observed on 51 equally spaced points of [0, 1].

Cases
-----
1. z_1 = 20, z_2 = z_3 = 5, rest 1; Y = c_3^2.
2. z_1 = z_3 = 5, z_5 = z_10 = 3, rest 1; Y = c_5^2.
3. Case 2 with Gaussian response noise and measurement error (SNR sqrt(10)).
4. all z_k = 1; Y = <beta_2, X> + <beta_1, X>^2, response noise and measurement error.
5. Case 4 with twice the response-noise variance.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .fda import FunctionalDataset, Grid
from .micronet import make_rng

N_COMPONENTS = 50
N_POINTS = 51
SQRT3 = math.sqrt(3.0)
# fixed stream for estimating per-case response scales
_SCALE_SEED = 20210718
_SCALE_DRAWS = 100_000


def cosine_basis(k: int, t) -> np.ndarray:
    """phi_k(t) for k >= 1."""
    t = np.asarray(t, dtype=np.float64)
    if k < 1:
        raise ValueError("basis index starts at 1")
    if k == 1:
        return np.ones_like(t)
    return math.sqrt(2.0) * np.cos((k - 1) * math.pi * t)


def cosine_matrix(t, n_components: int = N_COMPONENTS) -> np.ndarray:
    """Rows phi_1..phi_K evaluated at t, shape (K, len(t))."""
    t = np.asarray(t, dtype=np.float64)
    k = np.arange(n_components)[:, None]
    out = math.sqrt(2.0) * np.cos(k * math.pi * t[None, :])
    out[0] = 1.0
    return out


def signal_functions(t) -> Tuple[np.ndarray, np.ndarray]:
    """The two Case 4 signals beta_1, beta_2 evaluated at t."""
    t = np.asarray(t, dtype=np.float64)
    b1 = np.where((t >= 0) & (t <= 0.25), 4.0 - 16.0 * t, 0.0)
    b2 = np.where((t >= 0.25) & (t <= 0.75), 4.0 - 16.0 * np.abs(0.5 - t), 0.0)
    return b1, b2


def signal_coefficients(n_components: int = N_COMPONENTS) -> Tuple[np.ndarray, np.ndarray]:
    """Exact <beta_1, phi_k> and <beta_2, phi_k> for k = 1..K.

    With w = (k-1) pi:
      int_0^{1/4} (4 - 16t) cos(wt) dt = 16 (1 - cos(w/4)) / w^2
      int (4 - 16|t - 1/2|) cos(wt) dt over [1/4, 3/4] = 2 cos(w/2) * 16 (1 - cos(w/4)) / w^2
    """
    g1 = np.empty(n_components)
    g2 = np.empty(n_components)
    g1[0], g2[0] = 0.5, 1.0
    w = np.arange(1, n_components) * math.pi
    ramp = 16.0 * (1.0 - np.cos(w / 4)) / w**2
    g1[1:] = math.sqrt(2.0) * ramp
    g2[1:] = math.sqrt(2.0) * 2.0 * np.cos(w / 2) * ramp
    return g1, g2


def true_signals(case_id: int, t) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Names and values of the functions the response depends on."""
    if case_id == 1:
        return ("phi_3",), cosine_basis(3, t)[None, :]
    if case_id in (2, 3):
        return ("phi_5",), cosine_basis(5, t)[None, :]
    if case_id in (4, 5):
        return ("beta_1", "beta_2"), np.stack(signal_functions(t))
    raise ValueError(f"unknown simulation case {case_id}")


@dataclass(frozen=True)
class SimCaseSpec:
    case_id: int
    z: np.ndarray
    response_sd: float = 0.0  # sigma_Y
    snr: Optional[float] = None  # measurement SNR; None means noiseless curves
    n_train: int = 1500
    n_val: int = 300
    n_test: int = 300

    @property
    def signal_energy(self) -> float:
        """E[int X^2] = sum_k z_k^2 (unit-variance r_k, orthonormal basis)."""
        return float(np.sum(self.z**2))


def _z_values(case_id: int) -> np.ndarray:
    z = np.ones(N_COMPONENTS)
    if case_id == 1:
        z[0], z[1], z[2] = 20.0, 5.0, 5.0
    elif case_id in (2, 3):
        z[0] = z[2] = 5.0
        z[4] = z[9] = 3.0
    elif case_id not in (4, 5):
        raise ValueError(f"unknown simulation case {case_id}")
    return z


def noiseless_response(case_id: int, coefs: np.ndarray) -> np.ndarray:
    """Response from true coefficients, shape (n,) for coefs of shape (n, 50)."""
    coefs = np.atleast_2d(coefs)
    if case_id == 1:
        return coefs[:, 2] ** 2
    if case_id in (2, 3):
        return coefs[:, 4] ** 2
    if case_id in (4, 5):
        g1, g2 = signal_coefficients(coefs.shape[1])
        return coefs @ g2 + (coefs @ g1) ** 2
    raise ValueError(f"unknown simulation case {case_id}")


@functools.lru_cache(maxsize=None)
def default_response_sd(case_id: int) -> float:
    """sigma_Y: half the sd of the noiseless response (Cases 3-4), doubled variance for Case 5."""
    if case_id in (1, 2):
        return 0.0
    base = 4 if case_id == 5 else case_id
    rng = make_rng(_SCALE_SEED)
    r = rng.uniform(-SQRT3, SQRT3, size=(_SCALE_DRAWS, N_COMPONENTS))
    y = noiseless_response(base, r * _z_values(base))
    sd = 0.5 * float(np.std(y))
    return sd * math.sqrt(2.0) if case_id == 5 else sd


def case_spec(case_id: int, n_train: int = 1500, n_val: int = 300, n_test: int = 300) -> SimCaseSpec:
    return SimCaseSpec(
        case_id=case_id,
        z=_z_values(case_id),
        response_sd=default_response_sd(case_id),
        snr=math.sqrt(10.0) if case_id >= 3 else None,
        n_train=n_train,
        n_val=n_val,
        n_test=n_test,
    )


def simulation_grid() -> Grid:
    return Grid.uniform(N_POINTS)


def generate_curves(spec: SimCaseSpec, n: int, rng: np.random.Generator, grid: Optional[Grid] = None):
    """Noiseless curves (n, J+1) and their true coefficients (n, 50)."""
    grid = grid or simulation_grid()
    r = rng.uniform(-SQRT3, SQRT3, size=(n, spec.z.size))
    coefs = r * spec.z
    X = coefs @ cosine_matrix(grid.points, spec.z.size)
    return X, coefs


def generate_curve(spec: SimCaseSpec, rng: np.random.Generator, grid: Optional[Grid] = None):
    X, c = generate_curves(spec, 1, rng, grid)
    return X[0], c[0]


def make_response(spec: SimCaseSpec, coefs: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    y = noiseless_response(spec.case_id, coefs)
    if spec.response_sd > 0:
        if rng is None:
            raise ValueError("a generator is required for noisy responses")
        y = y + rng.normal(0.0, spec.response_sd, size=y.shape)
    return y


def measurement_noise_sd(signal_energy: float, target_snr: float) -> float:
    if target_snr <= 0:
        raise ValueError("target SNR must be positive")
    return math.sqrt(signal_energy) / target_snr


def add_measurement_noise(X: np.ndarray, target_snr: Optional[float], rng: np.random.Generator, signal_energy: float) -> np.ndarray:
    """Add iid N(0, s^2) with s = sqrt(E int X^2) / target_snr; no-op when disabled."""
    if target_snr is None or math.isinf(target_snr):
        return np.array(X, dtype=np.float64)
    sd = measurement_noise_sd(signal_energy, target_snr)
    return X + rng.normal(0.0, sd, size=np.shape(X))


@dataclass(frozen=True)
class TargetScaling:
    mean: float = 0.0
    sd: float = 1.0

    @classmethod
    def fit(cls, y: np.ndarray) -> "TargetScaling":
        sd = float(np.std(y))
        if sd == 0.0:
            raise ValueError("cannot standardize a constant response")
        return cls(float(np.mean(y)), sd)

    def apply(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.sd

    def invert(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * self.sd + self.mean


@dataclass
class SimulatedSplit:
    dataset: FunctionalDataset  # raw-unit responses
    coefficients: np.ndarray
    clean_X: np.ndarray


@dataclass
class SimulatedCase:
    spec: SimCaseSpec
    train: FunctionalDataset  # standardized responses
    val: FunctionalDataset
    test: FunctionalDataset
    scaling: TargetScaling
    raw: Tuple[SimulatedSplit, SimulatedSplit, SimulatedSplit]


def _draw_split(spec: SimCaseSpec, n: int, rng: np.random.Generator, grid: Grid) -> SimulatedSplit:
    clean, coefs = generate_curves(spec, n, rng, grid)
    y = make_response(spec, coefs, rng)
    X = add_measurement_noise(clean, spec.snr, rng, spec.signal_energy)
    return SimulatedSplit(FunctionalDataset(grid, X, y), coefs, clean)


def build_case(
    case_id: int,
    seed: int,
    n_train: int = 1500,
    n_val: int = 300,
    n_test: int = 300,
    spec: Optional[SimCaseSpec] = None,
) -> SimulatedCase:
    """Train/val/test datasets for one case; responses standardized by training statistics."""
    if spec is None:
        spec = case_spec(case_id, n_train, n_val, n_test)
    else:
        spec = replace(spec, n_train=n_train, n_val=n_val, n_test=n_test)
    grid = simulation_grid()
    rng = make_rng(seed)
    splits = tuple(_draw_split(spec, n, rng, grid) for n in (spec.n_train, spec.n_val, spec.n_test))
    scaling = TargetScaling.fit(splits[0].dataset.y)
    std = [FunctionalDataset(grid, s.dataset.X, scaling.apply(s.dataset.y)) for s in splits]
    return SimulatedCase(spec, std[0], std[1], std[2], scaling, splits)
