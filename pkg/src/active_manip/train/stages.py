"""Base pretraining, Stage-1 perception alignment and Stage-2 fine-tuning.

Each stage trains a fixed set of parameter groups and checksum-verifies the
rest:

* pretrain: ``base`` (target-cell classification, adapter switched off)
* stage1: ``adapter``, ``shared_dit`` and ``camera_head`` on the head
  objective only
* stage2: the trunk, both decoders and the spatial/fusion path on mixed
  perception and manipulation batches; ``adapter`` and ``base`` stay frozen
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
import torch
import torch.nn.functional as F

from ..config import PipelineConfig, TrainConfig
from ..errors import ConfigError, DataError
from ..model import ActivePolicy, ModelDims, SamplerConfig, build_policy, collate, denoising_loss, load_checkpoint
from ..model.diffusion import sample_chunks
from .data import IndexSampler, MixtureSampler, PerceptionDataset, PretrainDataset, make_batch
from .loop import StageResult, run_stage

logger = logging.getLogger(__name__)

STAGE1_GROUPS = ("adapter", "shared_dit", "camera_head")
STAGE2_GROUPS = ("spatial", "fusion", "shared_dit", "camera_head", "body_head")
DECODER_GROUPS = ("camera_head", "body_head")
# Validation records per angular-error evaluation.
VALIDATION_BATCH = 64


def stage1_groups(train: TrainConfig) -> tuple[str, ...]:
    if train.base_trainable:
        return ("base", "shared_dit", "camera_head")
    return STAGE1_GROUPS


def stage2_groups(train: TrainConfig) -> tuple[str, ...]:
    if train.stage2_decoders_only:
        groups = DECODER_GROUPS
    else:
        groups = STAGE2_GROUPS
        if train.stage2_freeze_spatial:
            groups = tuple(g for g in groups if g != "spatial")
    if train.base_trainable:
        groups = ("base", *groups)
    return groups


def _load_or_build(
    config: PipelineConfig,
    dims: ModelDims,
    checkpoint: Optional[str | Path],
    seed: int,
) -> tuple[ActivePolicy, dict[str, Any]]:
    if checkpoint is None:
        return build_policy(config, dims, seed=seed), {}
    return load_checkpoint(checkpoint, expected_dims=dims)


def pretrain_base(
    dataset: PretrainDataset,
    config: PipelineConfig,
    policy: Optional[ActivePolicy] = None,
    out_dir: Optional[str | Path] = None,
    resume: Optional[str | Path] = None,
) -> StageResult:
    """Train the base encoder to name the grid cell holding the target.

    On completion the base checksum is recorded in ``result.frozen`` and in
    the checkpoint; later stages keep it frozen.
    """
    stage_config = config.train.pretrain
    dims = dataset.inner.dims
    payload: dict[str, Any] = {}
    if resume is not None:
        policy, payload = load_checkpoint(resume, expected_dims=dims)
    elif policy is None:
        policy = build_policy(config, dims, seed=stage_config.seed)
    if dataset.grid != policy.config.pretrain_grid:
        raise ConfigError(f"model.pretrain_grid: model has {policy.config.pretrain_grid}, labels use {dataset.grid}")
    sampler = IndexSampler(dataset, stage_config.batch_size, stage_config.seed)

    def loss_fn(step: int, generator: torch.Generator):
        samples = sampler.samples(step)
        labels = torch.as_tensor(np.stack([s.pop("label") for s in samples]))
        inputs = collate(samples)
        phi, mask = policy.encode_observation(inputs, adapter_on=False)
        logits = policy.base.classify(phi, mask)
        loss = F.cross_entropy(logits, labels)
        accuracy = float((logits.argmax(dim=-1) == labels).float().mean())
        return loss, {"loss": float(loss), "accuracy": accuracy}

    result = run_stage(
        policy, "pretrain", stage_config, config.train, ("base",), loss_fn, out_dir, resume_payload=payload or None
    )
    result.frozen = {"base": policy.group_checksum("base")}
    logger.info(f"Base pretraining done; base checksum {result.frozen['base'][:12]}")
    return result


@torch.no_grad()
def classification_accuracy(policy: ActivePolicy, dataset: PretrainDataset) -> float:
    """Fraction of records whose target cell the base classifier names."""
    if len(dataset) == 0:
        raise DataError("No records to score")
    correct = 0
    for start in range(0, len(dataset), VALIDATION_BATCH):
        samples = [dataset.sample(j) for j in range(start, min(len(dataset), start + VALIDATION_BATCH))]
        labels = torch.as_tensor(np.stack([s.pop("label") for s in samples]))
        phi, mask = policy.encode_observation(collate(samples), adapter_on=False)
        correct += int((policy.base.classify(phi, mask).argmax(dim=-1) == labels).sum())
    return correct / len(dataset)


@torch.no_grad()
def angular_error(policy: ActivePolicy, dataset: PerceptionDataset, sampler: SamplerConfig) -> float:
    """Mean absolute difference between predicted and true chunk sums, in degrees."""
    if len(dataset) == 0:
        raise DataError("No validation records")
    errors = []
    for start in range(0, len(dataset), VALIDATION_BATCH):
        inputs, targets = make_batch([dataset.sample(j) for j in range(start, min(len(dataset), start + VALIDATION_BATCH))])
        head, _ = sample_chunks(policy, inputs, sampler)
        errors.append((head.sum(dim=1) - targets.head.sum(dim=1)).abs().double())
    return float(torch.cat(errors).mean())


def train_stage1(
    views,
    config: PipelineConfig,
    base_checkpoint: Optional[str | Path] = None,
    out_dir: Optional[str | Path] = None,
    resume: Optional[str | Path] = None,
) -> StageResult:
    """Align the adapter and camera branch on image-to-camera-motion records.

    ``lambda_other`` is forced to 0; the body decoder and the base stay
    frozen. Validation angular error is logged every ``eval_every`` steps
    when the dataset has a ``val`` split.

    Args:
        views: A dataset opened with ``viewgen.read_dataset``.
        config: Resolved pipeline configuration.
        base_checkpoint: Output of ``pretrain_base``; a fresh base is used if None.
        out_dir: Where the log and checkpoints go.
        resume: A Stage-1 checkpoint to continue from.
    """
    stage_config = config.train.stage1
    dims = ModelDims.from_config(config)
    payload: Optional[dict[str, Any]] = None
    if resume is not None:
        policy, payload = load_checkpoint(resume, expected_dims=dims)
    else:
        if base_checkpoint is None:
            logger.warning("No pretrained base given; Stage 1 starts from a random base encoder")
        policy, _ = _load_or_build(config, dims, base_checkpoint, stage_config.seed)
    wrist = policy.config.wrist_view
    train_set = PerceptionDataset(views, dims, ("train",), wrist=wrist)
    val_set = PerceptionDataset(views, dims, ("val",), wrist=wrist)
    if resume is None:
        policy.normalizer.fit(head=train_set.head_targets())
    policy.set_adapter(not config.train.base_trainable)
    sampler = IndexSampler(train_set, stage_config.batch_size, stage_config.seed)
    lambda_head = config.train.lambda_head

    def loss_fn(step: int, generator: torch.Generator):
        inputs, targets = sampler.batch(step)
        terms = denoising_loss(policy, inputs, targets, lambda_head, 0.0, generator=generator)
        return terms.total, terms.to_dict()

    validate = None
    if len(val_set):
        eval_sampler = SamplerConfig.from_config(policy.config, seed=stage_config.seed)
        val_set.indices = val_set.indices[:VALIDATION_BATCH]

        def validate(model: ActivePolicy) -> dict[str, float]:
            return {"val_angular_error": angular_error(model, val_set, eval_sampler)}

    else:
        logger.warning("Dataset has no val split; Stage 1 runs without validation")

    return run_stage(
        policy,
        "stage1",
        stage_config,
        config.train,
        stage1_groups(config.train),
        loss_fn,
        out_dir,
        validate=validate,
        resume_payload=payload,
    )


def _stage2_start(
    config: PipelineConfig, dims: ModelDims, stage1_checkpoint: Optional[str | Path]
) -> tuple[ActivePolicy, bool]:
    """Policy to fine-tune and whether it came out of Stage 1."""
    skip = config.train.skip_stage1
    if stage1_checkpoint is None:
        if not skip:
            raise ConfigError(
                "Stage 2 needs a Stage-1 checkpoint; pass one or set train.skip_stage1=true"
            )
        return build_policy(config, dims, seed=config.train.stage2.seed), False
    policy, payload = load_checkpoint(stage1_checkpoint, expected_dims=dims)
    stage = payload.get("extra", {}).get("stage")
    if stage != "stage1" and not skip:
        raise ConfigError(
            f"{stage1_checkpoint} is a {stage!r} checkpoint, not a Stage-1 checkpoint; "
            "set train.skip_stage1=true to fine-tune it directly"
        )
    return policy, stage == "stage1"


def train_stage2(
    mixture: MixtureSampler,
    config: PipelineConfig,
    stage1_checkpoint: Optional[str | Path] = None,
    out_dir: Optional[str | Path] = None,
    resume: Optional[str | Path] = None,
) -> StageResult:
    """Fine-tune on mixed batches with ``lambda_head * L_head + lambda_other * L_body``.

    Raises:
        ConfigError: no Stage-1 checkpoint and ``train.skip_stage1`` unset.
        FreezeViolationError: ``adapter`` or ``base`` changed.
    """
    stage_config = config.train.stage2
    dims = ModelDims.from_config(config)
    payload: Optional[dict[str, Any]] = None
    if resume is not None:
        policy, payload = load_checkpoint(resume, expected_dims=dims)
    else:
        policy, after_stage1 = _stage2_start(config, dims, stage1_checkpoint)
        heads, bodies = mixture.manipulation.targets()
        if not after_stage1:
            heads = np.concatenate([heads, mixture.perception.head_targets()])
            policy.normalizer.fit(head=heads, body=bodies)
        else:
            policy.normalizer.fit(body=bodies)
    if mixture.batch_size != stage_config.batch_size:
        logger.warning(f"Mixture batch size {mixture.batch_size} differs from stage2.batch_size {stage_config.batch_size}")
    policy.set_adapter(not config.train.base_trainable)
    lambda_head, lambda_other = config.train.lambda_head, config.train.lambda_other

    def loss_fn(step: int, generator: torch.Generator):
        inputs, targets = mixture.batch(step)
        terms = denoising_loss(policy, inputs, targets, lambda_head, lambda_other, generator=generator)
        values = terms.to_dict()
        values["perception_fraction"] = float(1.0 - targets.body_mask.mean())
        return terms.total, values

    return run_stage(
        policy,
        "stage2",
        stage_config,
        config.train,
        stage2_groups(config.train),
        loss_fn,
        out_dir,
        resume_payload=payload,
    )
