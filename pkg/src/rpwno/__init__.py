"""Randomized-prior wavelet neural operators with a NumPy autodiff core."""
from .checkpoint import load_checkpoint, save_checkpoint
from .ensemble import Ensemble, Normalizer, PredictionStats, RpWno, TrainConfig, ensemble_stats
from .estimator import RPWNORegressor, WNORegressor
from .metrics import EvalReport, ci_coverage, empirical_pdf, evaluate, mae, mean_std, nmse_percent, relative_l2_percent
from .model import WnoConfig, WnoModel, wno_forward
from .wavelet import daubechies_filters, dwt1d, dwt2d, idwt1d, idwt2d

__version__ = "0.1.0"

__all__ = [
    "Ensemble", "EvalReport", "Normalizer", "PredictionStats", "RPWNORegressor", "RpWno", "TrainConfig",
    "WNORegressor", "WnoConfig", "WnoModel", "ci_coverage", "daubechies_filters", "dwt1d", "dwt2d",
    "empirical_pdf", "ensemble_stats", "evaluate", "idwt1d", "idwt2d", "load_checkpoint", "mae", "mean_std",
    "nmse_percent", "relative_l2_percent", "save_checkpoint", "wno_forward",
]
