"""MLE pretraining, the three adversarial schemes, metrics and the collapse monitor."""

from loggan.training.config import Scheme, TrainConfig
from loggan.training.metrics import (
    CSV_COLUMNS,
    MetricsRow,
    TrainingMetrics,
    compute_metrics,
    detect_collapse,
    distinct_token_ratio,
    read_csv,
)
from loggan.training.schemes import (
    EncodedSplit,
    importance_weights,
    pretrain_discriminator,
    pretrain_mle,
    rollout_rewards,
    train_adversarial_iw,
    train_adversarial_pg,
    train_cooperative,
    train_scheme,
)

__all__ = [
    "Scheme",
    "TrainConfig",
    "CSV_COLUMNS",
    "MetricsRow",
    "TrainingMetrics",
    "compute_metrics",
    "detect_collapse",
    "distinct_token_ratio",
    "read_csv",
    "EncodedSplit",
    "importance_weights",
    "pretrain_discriminator",
    "pretrain_mle",
    "rollout_rewards",
    "train_adversarial_iw",
    "train_adversarial_pg",
    "train_cooperative",
    "train_scheme",
]
