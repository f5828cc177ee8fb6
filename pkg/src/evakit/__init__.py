"""evakit: scanpath metrics, the Gaze Consistency Score and a forward-only hard-attention model."""
__version__ = "0.1.0"

from .core import (
    DEFAULT_FRAME,
    DensityGrid,
    EvakitError,
    Fixation,
    ImageFrame,
    ReferenceFrame,
    Scanpath,
    read_jsonl,
)
from .gcs import GcsConfig, GcsReport, gcs
from .metrics import MetricConfig, RawMetrics, auc, density_grid, dtw, nss, raw_metrics, scanmatch

__all__ = [
    "DEFAULT_FRAME", "DensityGrid", "EvakitError", "Fixation", "GcsConfig", "GcsReport", "ImageFrame",
    "MetricConfig", "RawMetrics", "ReferenceFrame", "Scanpath", "auc", "density_grid", "dtw", "gcs", "nss",
    "raw_metrics", "read_jsonl", "scanmatch",
]
