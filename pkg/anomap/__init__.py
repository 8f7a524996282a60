"""Anomap core package.

SSIM-based anomaly maps for reconstruction-based lesion segmentation.
Exports commonly used modules and types for convenience.
"""

from . import imageops as imageops
from . import logging_config as logging_config
from . import metrics as metrics
from . import phantom as phantom
from . import pipeline as pipeline
from . import scoring as scoring
from . import volgrid as volgrid
from .config import RunConfig, load_run_config
from .models import AnomalyMap, Case, Mask3D, Volume3D
from .sweep import EvalReport, MethodResult, sigma_sweep

__all__ = [
    "imageops",
    "logging_config",
    "metrics",
    "phantom",
    "pipeline",
    "scoring",
    "volgrid",
    "RunConfig",
    "load_run_config",
    "AnomalyMap",
    "Case",
    "Mask3D",
    "Volume3D",
    "EvalReport",
    "MethodResult",
    "sigma_sweep",
]
