"""skelfit: fit an aligned keypoint skeleton to a 3D point cloud.

The library decodes a complete graph over k ordered keypoints into per-edge
sub-clouds, scores reconstructions with a composite chamfer distance
(activation-weighted fidelity + iterative coverage), fits the latent state
by first-order descent, and evaluates keypoints with mIoU, dual alignment
score, and in-order repeatability.
"""

__version__ = "0.1.0"

from .ccd import CcdConfig, CcdResult, active_backend, ccd, coverage_loss, fidelity_loss
from .ccd_oracle import coverage_loss_oracle
from .cloud import (
    AnnotationSet,
    BoundingBox,
    PointCloud,
    add_gaussian_noise,
    denormalize,
    farthest_point_sample,
    nearest_neighbor,
    normalize,
    subsample,
)
from .errors import ArgumentError, DivergenceError, ParseError, SkelfitError
from .fileio import load_annotations, load_cloud, save_annotations, save_cloud
from .metrics import (
    MatchConfig,
    MetricReport,
    das,
    miou,
    repeatability,
    skeleton_distance_histogram,
)
from .optim import FitConfig, FitParams, FitReport, extract_keypoints, fit, init_params, step
from .skeleton import (
    SamplingPlan,
    Skeleton,
    SubCloudSet,
    apply_offsets,
    enumerate_edges,
    offset_penalty,
    plan_sampling,
    sample_edges,
    skeleton_from_json,
    skeleton_to_json,
)

__all__ = [
    "__version__",
    "ArgumentError",
    "DivergenceError",
    "ParseError",
    "SkelfitError",
    "PointCloud",
    "BoundingBox",
    "AnnotationSet",
    "normalize",
    "denormalize",
    "nearest_neighbor",
    "farthest_point_sample",
    "subsample",
    "add_gaussian_noise",
    "load_cloud",
    "save_cloud",
    "load_annotations",
    "save_annotations",
    "Skeleton",
    "SamplingPlan",
    "SubCloudSet",
    "enumerate_edges",
    "plan_sampling",
    "sample_edges",
    "apply_offsets",
    "offset_penalty",
    "skeleton_to_json",
    "skeleton_from_json",
    "CcdConfig",
    "CcdResult",
    "ccd",
    "fidelity_loss",
    "coverage_loss",
    "coverage_loss_oracle",
    "active_backend",
    "FitConfig",
    "FitParams",
    "FitReport",
    "init_params",
    "step",
    "fit",
    "extract_keypoints",
    "MatchConfig",
    "MetricReport",
    "miou",
    "das",
    "repeatability",
    "skeleton_distance_histogram",
]
