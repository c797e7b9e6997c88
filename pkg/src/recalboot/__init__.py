"""Recalibrated-bootstrap prediction distributions for bagged multi-output forests."""

__version__ = "0.1.0"

from .datasets import Dataset, Standardizer
from .ensemble import TrainedForest, fit_forest, load_forest, predict_mean, predict_per_tree, save_forest
from .exceptions import (
    CalibrationError,
    ConfigError,
    DomainError,
    IngestionError,
    MetricError,
    NumericalError,
    RecalbootError,
)
from .intervals import (
    DEFAULT_P,
    CorrelationMethod,
    PredictionDistribution,
    prediction_distribution,
    recalibrate,
    recalibrated_sigma,
)
from .metrics import MetricReport, evaluate
from .stats import RngStream

__all__ = [
    "__version__",
    "Dataset",
    "Standardizer",
    "TrainedForest",
    "fit_forest",
    "load_forest",
    "save_forest",
    "predict_mean",
    "predict_per_tree",
    "RecalbootError",
    "CalibrationError",
    "ConfigError",
    "DomainError",
    "IngestionError",
    "MetricError",
    "NumericalError",
    "DEFAULT_P",
    "CorrelationMethod",
    "PredictionDistribution",
    "prediction_distribution",
    "recalibrate",
    "recalibrated_sigma",
    "MetricReport",
    "evaluate",
    "RngStream",
]
