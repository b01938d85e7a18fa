"""Point cloud completion from single-view partial scans."""

from .config import ModelConfig
from .geomcore import NormParams, PointCloud, chamfer_l2, compute_norm_params, denormalize, fps, knn, normalize
from .network import CompletionNetwork

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "PointCloud",
    "NormParams",
    "chamfer_l2",
    "compute_norm_params",
    "normalize",
    "denormalize",
    "fps",
    "knn",
    "CompletionNetwork",
]
