"""Edge-aware depth supervision and lift-splat BEV pooling, desk scale.

The package covers the training-side depth machinery of an LSS-style
bird's-eye-view pipeline: lidar-to-image projection, block-max
densification with edge maps, two focal depth losses with analytic
gradients, a small trainable depth-bin head, and the frustum-to-BEV
scatter. Everything is plain float64 numpy, deterministic, and backed by
oracle and finite-difference tests.
"""

from .config import RunConfig, StackShape, config_from_dict, load_config, save_config
from .eadf import EadfConfig, EadfResult, densify, directional_gradients, edge_map, \
    eadf_pipeline, fuse_eadf
from .geometry import (
    CameraCalib,
    PointCloud,
    load_calibrations,
    load_point_cloud,
    project_multiview,
    project_points,
    save_calibrations,
    save_point_cloud,
    unproject_pixel,
    unproject_pixels,
)
from .losses import (
    DepthBinning,
    FocalParams,
    LossReport,
    bin_index,
    eadf_loss,
    fgd_loss,
    one_hot,
    softmax,
    total_loss,
    validate_distribution,
)
from .splat import BevGrid, GridSpec, lift, splat, splat_reference
from .tensorio import export_stack_pgm, load_tensor, save_tensor, write_pgm16
from .toy_head import (
    SyntheticScene,
    ToyHeadParams,
    TrainingDiverged,
    TrainResult,
    head_backward,
    head_forward,
    make_synthetic_scene,
    train_toy,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "BevGrid",
    "CameraCalib",
    "DepthBinning",
    "EadfConfig",
    "EadfResult",
    "FocalParams",
    "GridSpec",
    "LossReport",
    "PointCloud",
    "RunConfig",
    "StackShape",
    "SyntheticScene",
    "ToyHeadParams",
    "TrainResult",
    "TrainingDiverged",
    "bin_index",
    "config_from_dict",
    "densify",
    "directional_gradients",
    "eadf_loss",
    "eadf_pipeline",
    "edge_map",
    "export_stack_pgm",
    "fgd_loss",
    "fuse_eadf",
    "head_backward",
    "head_forward",
    "lift",
    "load_calibrations",
    "load_config",
    "load_point_cloud",
    "load_tensor",
    "make_synthetic_scene",
    "one_hot",
    "project_multiview",
    "project_points",
    "save_calibrations",
    "save_config",
    "save_point_cloud",
    "save_tensor",
    "softmax",
    "splat",
    "splat_reference",
    "total_loss",
    "train_toy",
    "unproject_pixel",
    "unproject_pixels",
    "validate_distribution",
    "write_pgm16",
    "write_trace",
]
