"""Memory-based instance-level alignment for cross-domain adaptation.

A category-partitioned, quality-gated feature memory; top-K cosine
retrieval of alignment pairs; similarity-weighted contrastive and
adversarial losses with analytic gradients; and a synthetic domain-shift
harness that exercises the whole mechanism at desk scale.
"""

from .backends import BACKEND
from .config import (
    ExperimentConfig,
    ScheduleConfig,
    WorldConfig,
    config_from_dict,
    load_config,
)
from .errors import (
    ConfigError,
    InvalidFeatureError,
    MemalignError,
    NonFiniteLossError,
    NoPositivesError,
    SnapshotFormatError,
)
from .harness import (
    MetricsReport,
    RunResult,
    ToyModel,
    compute_metrics,
    evaluate_accuracy,
    pseudo_label,
    run_experiment,
    sweep,
    train_step,
)
from .losses import (
    LossBreakdown,
    LossWeights,
    combine,
    discriminator_loss,
    instance_alignment_loss,
    negative_loss,
    positive_loss,
)
from .memory import (
    InsertOutcome,
    InstanceRecord,
    MemoryBank,
    StoragePolicy,
    compute_capacities,
    load_snapshot,
    rebuild,
    snapshot,
)
from .retrieval import (
    BBox,
    Detection,
    RetrievalResult,
    ThresholdTable,
    compute_thresholds,
    cosine_similarity,
    filter_detections,
    minibatch_match_rate,
    nms,
    retrieve,
)
from .world import ImageSample, SyntheticWorld, generate_batch, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BBox",
    "ConfigError",
    "Detection",
    "ExperimentConfig",
    "ImageSample",
    "InsertOutcome",
    "InstanceRecord",
    "InvalidFeatureError",
    "LossBreakdown",
    "LossWeights",
    "MemalignError",
    "MemoryBank",
    "MetricsReport",
    "NoPositivesError",
    "NonFiniteLossError",
    "RetrievalResult",
    "RunResult",
    "ScheduleConfig",
    "SnapshotFormatError",
    "StoragePolicy",
    "SyntheticWorld",
    "ThresholdTable",
    "ToyModel",
    "WorldConfig",
    "combine",
    "compute_capacities",
    "compute_metrics",
    "compute_thresholds",
    "config_from_dict",
    "cosine_similarity",
    "discriminator_loss",
    "evaluate_accuracy",
    "filter_detections",
    "generate_batch",
    "generate_dataset",
    "instance_alignment_loss",
    "load_config",
    "load_snapshot",
    "minibatch_match_rate",
    "negative_loss",
    "nms",
    "pseudo_label",
    "positive_loss",
    "rebuild",
    "retrieve",
    "run_experiment",
    "snapshot",
    "sweep",
    "train_step",
]
