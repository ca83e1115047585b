"""Fully unsupervised image segmentation by jointly training a small CNN
feature extractor and a differentiable clustering head on a single image,
plus classical baselines and an mIOU / precision-recall evaluation harness."""

from .baselines import GsConfig, felzenszwalb, gaussian_smooth, kmeans, window_features
from .evaluation import (
    GtBundle,
    MatchRecord,
    PrCurve,
    iou,
    match_segments,
    miou,
    pr_ap,
    segments_from_labels,
    select_gt,
)
from .losses import LossBreakdown, Scribbles, con_loss, scr_loss, sim_loss, total_loss
from .network import (
    HyperParams,
    NetworkParams,
    ParamGrads,
    ResponseMap,
    assign_labels,
    backward,
    forward,
    init_params,
    sgd_momentum_step,
)
from .pipeline import (
    SegmentSet,
    SegmentationResult,
    TrainingDiverged,
    apply_fixed,
    extract_segments,
    segment,
    train_reference,
)

__version__ = "0.1.0"

__all__ = [
    "GsConfig",
    "GtBundle",
    "HyperParams",
    "LossBreakdown",
    "MatchRecord",
    "NetworkParams",
    "ParamGrads",
    "PrCurve",
    "ResponseMap",
    "Scribbles",
    "SegmentSet",
    "SegmentationResult",
    "TrainingDiverged",
    "apply_fixed",
    "assign_labels",
    "backward",
    "con_loss",
    "extract_segments",
    "felzenszwalb",
    "forward",
    "gaussian_smooth",
    "init_params",
    "iou",
    "kmeans",
    "match_segments",
    "miou",
    "pr_ap",
    "scr_loss",
    "segment",
    "segments_from_labels",
    "select_gt",
    "sgd_momentum_step",
    "sim_loss",
    "total_loss",
    "train_reference",
    "window_features",
]
