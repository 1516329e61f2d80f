"""Closed-loop manipulation evaluation and the generalization sweep.

Every episode is one ``EpisodeJob``. Task seeds come from
``(seed, family, visibility, index)`` and do not depend on the camera
configuration, so fixed and active cameras are compared on the same tasks.
Jobs run in a process pool when ``workers > 1`` and verdicts are reduced in
job order, which keeps reports identical for any worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import repeat
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from ..config import CAMERA_CONFIGS, PipelineConfig, SceneConfig
from ..env.demos import task_seed
from ..env.oracle import OraclePolicy
from ..env.rollout import EpisodePolicy, rollout
from ..env.state import EpisodeState
from ..env.tasks import TASK_FAMILIES, TaskSpec, sample_task, task_scene_config, visibility_modes
from ..errors import ConfigError, GenerationError, NumericalFault, RejectionError
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
from ..viewgen.dataset import RESERVED_LAYOUT_SEED_BASE
from ..world.render import Observation
from .report import REJECTED, EvalReport, tally

logger = logging.getLogger(__name__)

MANIPULATION_KEYS = ("family", "visibility", "camera_config")
SWEEP_AXES = ("unseen_objects", "observation_jitter", "unseen_scene_layouts")
UNPERTURBED = "none"
# Sub-seeds tried per episode until a bound object has a held-out category.
UNSEEN_OBJECT_ATTEMPTS = 16
CALL_SEED_STRIDE = 100_003

POLICIES = Registry("policy")


class ModelPolicy:
    """Drives a trained ``ActivePolicy`` through the episode protocol.

    Each call samples one chunk; the sampler seed is derived from the
    episode seed and the call count.
    """

    needs_observation = True

    def __init__(self, policy: ActivePolicy, config: PipelineConfig):
        self.policy = policy.eval()
        self.dims: ModelDims = policy.dims
        self.caps = ActionCaps.from_config(config)
        self.steps = config.model.sampling_steps
        self.deterministic = config.model.deterministic_sampling
        self.dtype = next(policy.parameters()).dtype
        self._tokens: tuple[int, ...] = ()
        self._seed = 0
        self._calls = 0

    def reset(self, task: TaskSpec, seed: int = 0) -> None:
        self._tokens = tuple(task.instruction.tokens)
        self._seed = int(seed)
        self._calls = 0

    def act(self, state: EpisodeState, obs: Optional[Observation]) -> tuple[np.ndarray, np.ndarray]:
        wrist = bool(self.policy.config.wrist_view)
        has_wrist = obs.wrist_observation is not None
        arrays = observation_arrays(obs, self._tokens, state.proprio, self.dims, wrist=wrist and has_wrist)
        if wrist and not has_wrist:
            arrays = blank_wrist_arrays(arrays)
        sampler = SamplerConfig(
            steps=self.steps,
            deterministic=self.deterministic,
            seed=(self._seed % CALL_SEED_STRIDE) * CALL_SEED_STRIDE + self._calls,
        )
        self._calls += 1
        with torch.no_grad():
            head, body = sample_chunks(self.policy, collate([arrays]).to(self.dtype), sampler, self.caps)
        return head[0].double().numpy(), body[0].double().numpy()


@POLICIES.register("oracle", "Scripted expert with privileged scene access")
def oracle_policy(config: PipelineConfig, checkpoint: Optional[str | Path] = None) -> EpisodePolicy:
    return OraclePolicy(config)


@POLICIES.register("model", "Trained policy loaded from a checkpoint")
def model_policy(config: PipelineConfig, checkpoint: Optional[str | Path] = None) -> EpisodePolicy:
    if checkpoint is None:
        raise ConfigError("The model policy needs --checkpoint")
    policy, _ = load_checkpoint(checkpoint, expected_dims=ModelDims.from_config(config))
    return ModelPolicy(policy, config)


class ObservationJitter:
    """Bounded multiplicative noise on semantic intensities.

    Every pixel channel is scaled by a factor drawn uniformly from
    ``[1 - magnitude, 1 + magnitude]`` and clipped at zero. Depth, rays and
    instance ids are left alone. Call ``n`` draws from ``(seed, n)``.
    """

    def __init__(self, magnitude: float, seed: int):
        if not 0.0 <= magnitude < 1.0:
            raise ValueError(f"Jitter magnitude must lie in [0, 1), got {magnitude}")
        self.magnitude = magnitude
        self.seed = int(seed)
        self.calls = 0

    def __call__(self, obs: Observation) -> Observation:
        rng = np.random.default_rng([self.seed, self.calls])
        self.calls += 1
        return self._jitter(obs, rng)

    def _jitter(self, obs: Observation, rng: np.random.Generator) -> Observation:
        raster = obs.semantic_raster
        noise = rng.uniform(1.0 - self.magnitude, 1.0 + self.magnitude, size=raster.shape)
        semantic = np.clip(raster * noise, 0.0, None).astype(raster.dtype)
        wrist = obs.wrist_observation
        if wrist is not None:
            wrist = self._jitter(wrist, rng)
        return replace(obs, semantic_raster=semantic, wrist_observation=wrist)


@dataclass(frozen=True)
class EpisodeJob:
    """One evaluation episode.

    Attributes:
        episode: Position in the verdict log.
        family: Task family.
        visibility: Visibility mode.
        camera_config: Camera configuration.
        task_seed: Seed handed to ``sample_task``.
        scene_config: Overrides the family's scene distribution.
        jitter: Observation jitter magnitude; ``0`` leaves observations alone.
        require_categories: A bound object must have one of these categories.
        perturbation: Sweep axis, or ``None`` outside sweeps.
    """

    episode: int
    family: str
    visibility: str
    camera_config: str
    task_seed: int
    scene_config: Optional[SceneConfig] = None
    jitter: float = 0.0
    require_categories: tuple[str, ...] = ()
    perturbation: Optional[str] = None

    def header(self) -> dict[str, Any]:
        head = {
            "episode": self.episode,
            "family": self.family,
            "visibility": self.visibility,
            "camera_config": self.camera_config,
            "task_seed": self.task_seed,
        }
        if self.perturbation is not None:
            head["perturbation"] = self.perturbation
        return head


def binds_category(task: TaskSpec, categories: Sequence[str]) -> bool:
    """Whether a bound object (occluders aside) has one of ``categories``."""
    wanted = set(categories)
    bound = {entity for role, entity in task.bindings.items() if role != "occluder"}
    return any(obj.id in bound and obj.category in wanted for obj in task.scene.objects)


def sample_job_task(job: EpisodeJob, config: PipelineConfig) -> TaskSpec:
    """Task for ``job``; retries sub-seeds when held-out categories are required.

    Raises:
        RejectionError: when no task could be sampled.
    """
    if not job.require_categories:
        return sample_task(job.family, job.visibility, job.task_seed, config, job.scene_config)
    for attempt in range(UNSEEN_OBJECT_ATTEMPTS):
        sub_seed = job.task_seed * UNSEEN_OBJECT_ATTEMPTS + attempt
        try:
            task = sample_task(job.family, job.visibility, sub_seed, config, job.scene_config)
        except (RejectionError, GenerationError) as e:
            logger.debug(f"Episode {job.episode} sub-seed {attempt} rejected: {e}")
            continue
        if binds_category(task, job.require_categories):
            return task
    raise RejectionError(
        f"{job.family}/{job.visibility}: no task bound a held-out category after {UNSEEN_OBJECT_ATTEMPTS} seeds"
    )


def run_eval_episode(
    job: EpisodeJob, policy: EpisodePolicy, config: PipelineConfig, log_dir: Optional[str | Path] = None
) -> dict[str, Any]:
    """Run one job and return its verdict line.

    Rejected task sampling yields verdict ``rejected``; a numerical fault in
    the policy ends the episode as a failure with reason ``fault``.
    """
    verdict = job.header()
    try:
        task = sample_job_task(job, config)
    except (RejectionError, GenerationError) as e:
        logger.info(f"Episode {job.episode} ({job.family}/{job.visibility}) rejected: {e}")
        return {**verdict, "verdict": REJECTED, "reason": "task_sampling", "steps": 0, "oracle_failure": False}
    log_path = Path(log_dir) / f"episode_{job.episode:05d}.jsonl" if log_dir is not None else None
    jitter = ObservationJitter(job.jitter, job.task_seed) if job.jitter > 0 else None
    try:
        result = rollout(
            task,
            policy,
            config,
            camera_config=job.camera_config,
            seed=job.task_seed,
            log_path=log_path,
            observation_filter=jitter,
        )
    except NumericalFault as e:
        logger.warning(f"Episode {job.episode} ended by a numerical fault: {e} {e.diagnostics}")
        return {**verdict, "verdict": "failed", "reason": "fault", "steps": 0, "oracle_failure": False}
    return {
        **verdict,
        "instruction": task.instruction.text,
        "verdict": result.verdict,
        "reason": result.reason,
        "steps": result.steps,
        "oracle_failure": result.oracle_failure,
    }


def run_jobs(
    jobs: Sequence[EpisodeJob],
    policy: EpisodePolicy,
    config: PipelineConfig,
    workers: int = 1,
    log_dir: Optional[str | Path] = None,
    desc: str = "episodes",
) -> list[dict[str, Any]]:
    """Verdicts for ``jobs`` in job order, for any worker count."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(
                tqdm(
                    pool.map(run_eval_episode, jobs, repeat(policy), repeat(config), repeat(log_dir)),
                    total=len(jobs),
                    desc=desc,
                    disable=None,
                )
            )
    return [run_eval_episode(job, policy, config, log_dir) for job in tqdm(jobs, desc=desc, disable=None)]


def _camera_configs(camera_config: str | Sequence[str]) -> tuple[str, ...]:
    configs = (camera_config,) if isinstance(camera_config, str) else tuple(camera_config)
    unknown = [c for c in configs if c not in CAMERA_CONFIGS]
    if unknown or not configs:
        raise ConfigError(
            [f"Unknown camera configuration {c!r}; expected one of {', '.join(CAMERA_CONFIGS)}" for c in unknown]
            or ["No camera configuration given"]
        )
    return configs


def episode_jobs(
    tasks: Sequence[str],
    visibility: Sequence[str],
    camera_config: str | Sequence[str],
    n_episodes: int,
    seed: int,
) -> list[EpisodeJob]:
    """Jobs for every available (family, visibility, camera) cell.

    Raises:
        ValueError: for ``n_episodes < 1``.
        ConfigError: for unknown families or camera configurations.
    """
    if n_episodes < 1:
        raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
    unknown = [f for f in tasks if f not in TASK_FAMILIES]
    if unknown:
        raise ConfigError([f"Unknown task family {f!r}" for f in unknown])
    cameras = _camera_configs(camera_config)
    jobs: list[EpisodeJob] = []
    for family in tasks:
        for mode in visibility:
            if mode not in visibility_modes(family):
                logger.info(f"Skipping {family}/{mode}: mode not available for this family")
                continue
            for camera in cameras:
                for index in range(n_episodes):
                    jobs.append(EpisodeJob(len(jobs), family, mode, camera, task_seed(seed, family, mode, index)))
    return jobs


def eval_manipulation(
    policy: EpisodePolicy,
    tasks: Sequence[str],
    visibility: Sequence[str],
    camera_config: str | Sequence[str],
    n_episodes: int,
    seed: int,
    config: PipelineConfig,
    workers: int = 1,
    log_dir: Optional[str | Path] = None,
    policy_name: Optional[str] = None,
) -> EvalReport:
    """Success rates over task x visibility x camera configuration.

    Args:
        policy: Oracle or model policy.
        tasks: Task families.
        visibility: Visibility modes; modes a family lacks are skipped.
        camera_config: One configuration or several (the fixed-vs-active grid).
        n_episodes: Episodes per cell.
        seed: Root seed for task seeds.
        config: Pipeline configuration.
        workers: Process count.
        log_dir: Where per-episode trajectory logs go, if anywhere.
        policy_name: Recorded in the report.
    """
    jobs = episode_jobs(tasks, visibility, camera_config, n_episodes, seed)
    logger.info(f"Evaluating {len(jobs)} manipulation episodes with seed={seed} workers={workers}")
    verdicts = run_jobs(jobs, policy, config, workers, log_dir, desc="manipulation")
    return tally(
        "manipulation",
        verdicts,
        MANIPULATION_KEYS,
        seeds=(seed,),
        fingerprint=config.fingerprint(),
        meta={"policy": policy_name or type(policy).__name__, "n_episodes": n_episodes},
    )


def unseen_object_scene(family: str, config: PipelineConfig) -> SceneConfig:
    """Family scene settings with the held-out categories let back in and required."""
    heldout = tuple(config.viewgen.heldout_categories)
    base = task_scene_config(family, config)
    excluded = tuple(c for c in base.excluded_categories if c not in heldout)
    required = base.required_categories or heldout
    return replace(base, excluded_categories=excluded, required_categories=required)


def perturb_jobs(axis: str, jobs: Sequence[EpisodeJob], config: PipelineConfig, start: int) -> list[EpisodeJob]:
    """Copies of ``jobs`` moved onto one sweep axis, numbered from ``start``.

    Raises:
        ConfigError: when the axis is unknown or its reserved set is empty.
    """
    vg = config.viewgen
    out = []
    for offset, job in enumerate(jobs):
        common = {"episode": start + offset, "perturbation": axis}
        if axis == "unseen_objects":
            if not vg.heldout_categories:
                raise ConfigError("viewgen.heldout_categories is empty; no unseen objects are reserved")
            out.append(
                replace(
                    job,
                    scene_config=unseen_object_scene(job.family, config),
                    require_categories=tuple(vg.heldout_categories),
                    **common,
                )
            )
        elif axis == "unseen_scene_layouts":
            if not any(vg.reserved_layout_shift):
                raise ConfigError("viewgen.reserved_layout_shift is zero; no unseen layouts are reserved")
            scene = replace(task_scene_config(job.family, config), layout_shift=tuple(vg.reserved_layout_shift))
            out.append(replace(job, task_seed=RESERVED_LAYOUT_SEED_BASE + job.task_seed, scene_config=scene, **common))
        elif axis == "observation_jitter":
            if not 0.0 <= config.eval.jitter < 1.0:
                raise ConfigError(f"eval.jitter: must lie in [0, 1), got {config.eval.jitter}")
            out.append(replace(job, jitter=config.eval.jitter, **common))
        else:
            raise ConfigError(f"Unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    return out


def generalization_sweep(
    policy: EpisodePolicy,
    perturbations: Sequence[str],
    config: PipelineConfig,
    seed: int,
    tasks: Optional[Sequence[str]] = None,
    visibility: Optional[Sequence[str]] = None,
    camera_config: Optional[str | Sequence[str]] = None,
    n_episodes: Optional[int] = None,
    workers: int = 1,
    log_dir: Optional[str | Path] = None,
    policy_name: Optional[str] = None,
) -> EvalReport:
    """Evaluate on each perturbation axis next to the unperturbed tasks.

    The report's conditions gain a ``perturbation`` field; ``none`` rows are
    the unperturbed episodes on the same task seeds.
    """
    ev = config.eval
    if not perturbations:
        raise ConfigError("No sweep axis given")
    base = episode_jobs(
        ev.tasks if tasks is None else tasks,
        ev.visibility if visibility is None else visibility,
        ev.camera_config if camera_config is None else camera_config,
        ev.n_episodes if n_episodes is None else n_episodes,
        seed,
    )
    jobs = [replace(job, perturbation=UNPERTURBED) for job in base]
    for axis in perturbations:
        jobs += perturb_jobs(axis, base, config, start=len(jobs))
    logger.info(f"Sweeping {', '.join(perturbations)} over {len(base)} episodes each")
    verdicts = run_jobs(jobs, policy, config, workers, log_dir, desc="sweep")
    return tally(
        "sweep",
        verdicts,
        ("perturbation", *MANIPULATION_KEYS),
        seeds=(seed,),
        fingerprint=config.fingerprint(),
        meta={
            "policy": policy_name or type(policy).__name__,
            "jitter": ev.jitter,
            "heldout_categories": list(config.viewgen.heldout_categories),
            "reserved_layout_shift": list(config.viewgen.reserved_layout_shift),
        },
    )
