"""Graph-based varying coefficient networks for continuous treatment effects.

Each ROI of a brain graph is treated in turn as a continuous treatment; the
remaining ROIs feed a Chebyshev graph convolution, demographics feed a Deep
& Cross network, and a spline varying-coefficient head estimates the
outcome under any treatment level.
"""
from .analysis import ClusterReport, TrendClusterer, cluster_curves, cluster_report, kmeans, label_trend
from .config import GvcnetConfig, load_config, parse_config
from .data import Dataset, NormalizationStats, load_dataset, split_dataset, write_dataset
from .estimator import GVCNetClassifier
from .exceptions import GvcnetError, NumericalError, ValidationError
from .graph import RoiGraph, cheb_apply, laplacian, load_graph, power_iteration, scale_laplacian
from .model import (
    AdrfCurve,
    assemble,
    check_positivity,
    classify,
    estimate_adrf,
    estimate_ite,
    predict_proba,
    train,
)
from .numerics import ParamStore, adam_step, central_diff_gradient, check_gradients, make_rng
from .rotation import run_rotation
from .synth import GeneratorConfig, evaluate_adrf, generate, oracle_adrf

__version__ = "0.1.0"
