"""MIST: top-K patch detection trained end-to-end by lifting the
non-differentiable selection into slack variables.

Pipeline: a shared fully-convolutional heatmap network scores the image at
multiple scales; the K best local maxima select square windows; a shared
task head (autoencoder or classifier) consumes the resampled patches. The
selection step is trained through a three-stage block coordinate descent.
"""

from .config import ExperimentConfig, load_config
from .extraction import KeypointSet, extract_top_k, generate_heatmap
from .heatmap import HeatmapNet, ScaleSpaceHeatmap, ScaleSpaceSpec, heatmap_forward, local_spatial_softmax, softmax_pool_scales
from .records import Dataset, Instance, SceneRecord
from .sampling import PatchBatch, gather, gather_vjp, paste

__all__ = [
    "ExperimentConfig",
    "load_config",
    "KeypointSet",
    "extract_top_k",
    "generate_heatmap",
    "HeatmapNet",
    "ScaleSpaceHeatmap",
    "ScaleSpaceSpec",
    "heatmap_forward",
    "local_spatial_softmax",
    "softmax_pool_scales",
    "Dataset",
    "Instance",
    "SceneRecord",
    "PatchBatch",
    "gather",
    "gather_vjp",
    "paste",
]

__version__ = "0.1.0"
