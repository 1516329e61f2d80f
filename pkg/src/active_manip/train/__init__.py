"""Bottom-up training: base pretraining, Stage 1 and Stage 2."""

from .data import (
    DemoDataset,
    IndexSampler,
    MixtureSampler,
    PerceptionDataset,
    PretrainDataset,
    make_batch,
    mix_datasets,
    target_cell,
)
from .loop import StageResult, TrainLog, read_train_log, run_stage
from .stages import (
    angular_error,
    classification_accuracy,
    pretrain_base,
    stage1_groups,
    stage2_groups,
    train_stage1,
    train_stage2,
)

__all__ = [
    "DemoDataset",
    "IndexSampler",
    "MixtureSampler",
    "PerceptionDataset",
    "PretrainDataset",
    "StageResult",
    "TrainLog",
    "angular_error",
    "classification_accuracy",
    "make_batch",
    "mix_datasets",
    "pretrain_base",
    "read_train_log",
    "run_stage",
    "stage1_groups",
    "stage2_groups",
    "target_cell",
    "train_stage1",
    "train_stage2",
]
