"""Closed-loop perception evaluation on stored view records.

Each record starts from its stored observation. A predictor proposes a head
chunk, the chunk's steps are applied with clamping, the scene is re-rendered
from the new pose, and this repeats for up to ``max_chunks`` chunks or until
a chunk moves the head by less than ``min_chunk_motion`` degrees. The record
succeeds when the accumulated pitch and yaw changes each lie within the
tolerance of the ground-truth change. The arm is never touched.
"""

from __future__ import annotations

import logging
from typing import Any, Optional, Protocol, Sequence

import numpy as np
import torch
from tqdm import tqdm

from ..config import PipelineConfig
from ..errors import ConfigError, DimensionError
from ..model import (
    ActionCaps,
    ActivePolicy,
    ModelDims,
    SamplerConfig,
    blank_wrist_arrays,
    collate,
    load_checkpoint,
    observation_arrays,
)
from ..model.diffusion import sample_chunks
from ..registry import Registry
from ..viewgen.dataset import record_scene
from ..viewgen.views import make_gt_chunk
from ..world.camera import CameraState, apply_head_delta
from ..world.render import render_view
from .report import EvalReport, tally

logger = logging.getLogger(__name__)

PERCEPTION_SPLITS = ("val", "test1", "test2")
CHUNK_SEED_STRIDE = 1_000

PREDICTORS = Registry("predictor")


class HeadPredictor(Protocol):
    """Proposes the next ``(k, 2)`` head chunk for a record."""

    name: str

    def predict(self, record, obs, camera: CameraState, chunk: int) -> np.ndarray: ...


class GroundTruthPredictor:
    """Emits the capped chunk that would reach the record's target view."""

    name = "ground_truth"

    def __init__(self, horizon: int, per_step_cap: float):
        self.horizon = horizon
        self.per_step_cap = per_step_cap

    def predict(self, record, obs, camera: CameraState, chunk: int) -> np.ndarray:
        remaining = (record.target_camera[0] - camera.pitch, record.target_camera[1] - camera.yaw)
        steps, _ = make_gt_chunk(remaining, self.horizon, self.per_step_cap)
        return steps


class ZeroPredictor:
    name = "zero"

    def __init__(self, horizon: int):
        self.horizon = horizon

    def predict(self, record, obs, camera: CameraState, chunk: int) -> np.ndarray:
        return np.zeros((self.horizon, 2))


class PolicyPredictor:
    """Samples head chunks from a trained policy.

    The sampler seed is derived from ``(seed, record index, chunk)`` so every
    record sees the same noise regardless of evaluation order.
    """

    name = "model"

    def __init__(self, policy: ActivePolicy, config: PipelineConfig, seed: int = 0):
        self.policy = policy.eval()
        self.dims: ModelDims = policy.dims
        self.caps = ActionCaps.from_config(config)
        self.steps = config.model.sampling_steps
        self.deterministic = config.model.deterministic_sampling
        self.seed = seed
        self.dtype = next(policy.parameters()).dtype

    def check(self, views) -> None:
        if tuple(views.raster_dims) != tuple(self.dims.raster):
            raise DimensionError(f"Dataset raster {views.raster_dims} != model raster {self.dims.raster}", layer="patch_embed")
        if int(views.header["chunk_horizon"]) != self.dims.horizon:
            raise DimensionError(
                f"Dataset chunk horizon {views.header['chunk_horizon']} != model horizon {self.dims.horizon}",
                layer="dit.in_proj",
            )

    def predict(self, record, obs, camera: CameraState, chunk: int) -> np.ndarray:
        arrays = observation_arrays(obs, record.instruction.tokens, None, self.dims)
        if self.policy.config.wrist_view:
            arrays = blank_wrist_arrays(arrays)
        inputs = collate([arrays]).to(self.dtype)
        sampler = SamplerConfig(
            steps=self.steps,
            deterministic=self.deterministic,
            seed=(self.seed * CHUNK_SEED_STRIDE + record.index) * CHUNK_SEED_STRIDE + chunk,
        )
        with torch.no_grad():
            head, _ = sample_chunks(self.policy, inputs, sampler, self.caps)
        return head[0].double().numpy()


@PREDICTORS.register("ground_truth", "Capped chunk towards the stored target view")
def ground_truth_predictor(config: PipelineConfig, checkpoint=None, seed: int = 0) -> HeadPredictor:
    return GroundTruthPredictor(config.viewgen.chunk_horizon, config.viewgen.per_step_cap)


@PREDICTORS.register("zero", "Never moves the head")
def zero_predictor(config: PipelineConfig, checkpoint=None, seed: int = 0) -> HeadPredictor:
    return ZeroPredictor(config.viewgen.chunk_horizon)


@PREDICTORS.register("model", "Head chunks sampled from a trained policy")
def model_predictor(config: PipelineConfig, checkpoint=None, seed: int = 0) -> HeadPredictor:
    if checkpoint is None:
        raise ConfigError("The model predictor needs --checkpoint")
    policy, _ = load_checkpoint(checkpoint, expected_dims=ModelDims.from_config(config))
    return PolicyPredictor(policy, config, seed)


def run_record(
    predictor: HeadPredictor,
    views,
    i: int,
    config: PipelineConfig,
    tolerance: float,
    max_chunks: int,
) -> dict[str, Any]:
    """Evaluate record ``i``; returns its verdict line."""
    record = views.records[i]
    camera = views.camera(record.initial_camera)
    obs = views.observation(i)
    scene = None
    accumulated = np.zeros(2)
    clamped = False
    chunks = 0
    for chunk in range(max_chunks):
        steps = np.asarray(predictor.predict(record, obs, camera, chunk), dtype=np.float64)
        chunks += 1
        before = np.array([camera.pitch, camera.yaw])
        for row in steps:
            camera, was_clamped = apply_head_delta(camera, row)
            clamped |= was_clamped
        moved = np.array([camera.pitch, camera.yaw]) - before
        accumulated += moved
        if np.all(np.abs(moved) < config.eval.min_chunk_motion):
            break
        if chunk + 1 < max_chunks:
            scene = scene if scene is not None else record_scene(record, config)
            obs = render_view(scene, camera)
    error = np.abs(accumulated - np.asarray(record.total_delta))
    success = bool(np.all(error <= tolerance))
    return {
        "record_id": record.record_id,
        "split": record.split,
        "modality": record.modality,
        "template_id": record.template_id,
        "chunks": chunks,
        "accumulated": [float(a) for a in accumulated],
        "total_delta": [float(d) for d in record.total_delta],
        "error": [float(e) for e in error],
        "clamped": clamped,
        "saturated": record.saturated,
        "verdict": "success" if success else "failed",
    }


def eval_perception(
    predictor: HeadPredictor,
    views,
    config: PipelineConfig,
    tolerance: Optional[float] = None,
    max_chunks: Optional[int] = None,
    splits: Optional[Sequence[str]] = PERCEPTION_SPLITS,
    seed: int = 0,
) -> EvalReport:
    """Per-split success rate of closing the view with accumulated chunks.

    Args:
        predictor: Ground-truth, zero or model predictor.
        views: A dataset opened with ``viewgen.read_dataset``.
        config: Pipeline configuration the dataset was generated with.
        tolerance: Degrees per axis (default ``eval.tolerance``).
        max_chunks: Chunk budget per record (default ``eval.max_chunks``).
        splits: Splits to evaluate; ``None`` evaluates every record.
        seed: Recorded in the report; model predictors carry their own.

    Raises:
        ConfigError: for a non-positive tolerance or chunk budget.
        DimensionError: when the dataset does not fit the model.
    """
    tolerance = config.eval.tolerance if tolerance is None else tolerance
    max_chunks = config.eval.max_chunks if max_chunks is None else max_chunks
    problems = []
    if not tolerance > 0:
        problems.append(f"eval.tolerance: must be > 0, got {tolerance}")
    if max_chunks < 1:
        problems.append(f"eval.max_chunks: must be >= 1, got {max_chunks}")
    if problems:
        raise ConfigError(problems)
    check = getattr(predictor, "check", None)
    if check is not None:
        check(views)

    wanted = None if splits is None else set(splits)
    indices = [i for i, r in enumerate(views.records) if wanted is None or r.split in wanted]
    if not indices:
        logger.warning(f"No records in splits {sorted(wanted or [])}; the report is empty")
    logger.info(f"Evaluating perception on {len(indices)} records with the {predictor.name} predictor")
    verdicts = [
        run_record(predictor, views, i, config, tolerance, max_chunks)
        for i in tqdm(indices, desc="perception", disable=None)
    ]
    return tally(
        "perception",
        verdicts,
        ("split",),
        seeds=(seed,),
        fingerprint=config.fingerprint(),
        meta={"predictor": predictor.name, "tolerance": tolerance, "max_chunks": max_chunks},
    )
