"""Prototype classifiers with softmax and distance-ratio confidence heads."""

__version__ = "0.1.0"

from .core import angular_distance, euclidean_distance, geometric_mean, mean_center
from .datasets import (
    Dataset,
    Episode,
    SyntheticConfig,
    generate_synthetic,
    load_csv,
    sample_episode,
)
from .diagnostics import (
    CheckpointRecord,
    compare_runs,
    estimate_alpha,
    norm_ratio,
    psi_ratios,
    ratio_report,
)
from .episodes import TrainConfig, TrainLog, episode_loss, evaluate, train
from .estimator import ProtoNetClassifier
from .heads import (
    ConfidenceVector,
    Head,
    HeadKind,
    angular_confidences,
    cosine_confidences,
    cross_entropy,
    dr_confidences,
    softmax_confidences,
)
from .net import MlpParams, adam_step, forward, init_params, loss_gradients
from .stats import fisher_exact, mann_whitney_u

__all__ = [
    "CheckpointRecord",
    "ConfidenceVector",
    "Dataset",
    "Episode",
    "Head",
    "HeadKind",
    "MlpParams",
    "ProtoNetClassifier",
    "SyntheticConfig",
    "TrainConfig",
    "TrainLog",
    "adam_step",
    "angular_confidences",
    "angular_distance",
    "compare_runs",
    "cosine_confidences",
    "cross_entropy",
    "dr_confidences",
    "episode_loss",
    "estimate_alpha",
    "euclidean_distance",
    "evaluate",
    "fisher_exact",
    "forward",
    "generate_synthetic",
    "geometric_mean",
    "init_params",
    "load_csv",
    "loss_gradients",
    "mann_whitney_u",
    "mean_center",
    "norm_ratio",
    "psi_ratios",
    "ratio_report",
    "sample_episode",
    "softmax_confidences",
    "train",
]
