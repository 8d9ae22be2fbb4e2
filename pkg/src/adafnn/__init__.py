"""Adaptive functional neural networks.

Functional regression and classification with a learned basis layer: each
basis function is a small neural network of t, curves are reduced to
quadrature scores against those bases, and a dense head predicts the
response. Includes fixed-basis baselines (raw, B-spline, FPCA), the five
simulation cases, and an experiment harness.
"""

from .baselines import BSplineBasis, FpcaModel, HeadModel, bspline_fit, fpca_fit, fpca_scores
from .config import ConfigError, ExperimentConfig, load_config
from .fda import FunctionalDataset, FunctionalSample, Grid, GridError, QuadratureRule, inner_product, l2_norm, make_quadrature
from .io import DataError, ingest_csv, read_basis_csv, write_basis_csv, write_dataset_csv
from .micronet import Adam, DecayingSGD, LayerSpec, MicroNet, make_rng
from .model import AdaFNN, BasisLayerConfig, RegularizerConfig, TrainingError, orthogonality_penalty, sparsity_penalty
from .runner import run_experiment
from .simgen import build_case, case_spec
from .training import FitReport, TrainConfig, evaluate, mse, roc_auc, train

__version__ = "0.1.0"
