"""Factor-count and residual-autocorrelation estimation by spectral distance."""

from .estimator import EstimationResult, EstimatorConfig, SearchGrid, estimate
from .frv import ModelParams, model_density, mp_density
from .spectra import ReturnPanel, normalize_panel
from .synthgen import SyntheticConfig, generate

__all__ = [
    "EstimationResult",
    "EstimatorConfig",
    "ModelParams",
    "ReturnPanel",
    "SearchGrid",
    "SyntheticConfig",
    "estimate",
    "generate",
    "model_density",
    "mp_density",
    "normalize_panel",
]

__version__ = "0.1.0"
