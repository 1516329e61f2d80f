"""Closed-loop episodes and their line-delimited trajectory logs.

A trajectory log has one JSON object per line: an ``episode`` header with
the task, one ``step`` record per environment step and a closing
``verdict`` record.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Protocol

import numpy as np

from ..config import PipelineConfig
from ..errors import ConfigError, OracleFailure
from ..world.render import Observation
from .state import EpisodeState, observe, reset, step
from .success import check_success, measure
from .tasks import TaskSpec

logger = logging.getLogger(__name__)

CAMERA_CONFIGS: tuple[str, ...] = ("fixed", "fixed+wrist", "active", "active+wrist")


class EpisodePolicy(Protocol):
    """Anything that maps the current state and observation to an action chunk."""

    needs_observation: bool

    def reset(self, task: TaskSpec, seed: int = 0) -> None: ...

    def act(self, state: EpisodeState, obs: Optional[Observation]) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(n, 2)`` head and ``(n, D_BODY)`` body actions to execute in order."""
        ...


@dataclass
class EpisodeSample:
    """What the policy saw at one step, kept for demonstration export."""

    step: int
    observation: Observation
    proprio: np.ndarray
    camera: tuple[float, float]


@dataclass
class EpisodeResult:
    task: TaskSpec
    verdict: str
    reason: Optional[str]
    steps: int
    camera_config: str = "active"
    oracle_failure: bool = False
    records: list[dict[str, Any]] = field(default_factory=list)
    head_actions: list[np.ndarray] = field(default_factory=list)
    body_actions: list[np.ndarray] = field(default_factory=list)
    samples: list[EpisodeSample] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.verdict == "success"

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.task.family,
            "visibility": self.task.visibility,
            "seed": self.task.seed,
            "camera_config": self.camera_config,
            "instruction": self.task.instruction.text,
            "verdict": self.verdict,
            "reason": self.reason,
            "steps": self.steps,
            "oracle_failure": self.oracle_failure,
        }


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


class TrajectoryLog:
    """Writes trajectory lines to a file, or does nothing without a path."""

    def __init__(self, path: Optional[str | Path]) -> None:
        self.path = Path(path) if path is not None else None
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")

    def write(self, record: dict[str, Any]) -> None:
        if self._fh is not None:
            self._fh.write(json.dumps(_jsonable(record), sort_keys=True) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "TrajectoryLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_trajectory(path: str | Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def rollout(
    task: TaskSpec,
    policy: EpisodePolicy,
    config: Optional[PipelineConfig] = None,
    camera_config: str = "active",
    seed: int = 0,
    log_path: Optional[str | Path] = None,
    record_every: Optional[int] = None,
    observation_filter: Optional[Callable[[Observation], Observation]] = None,
) -> EpisodeResult:
    """Run one episode until success, failure or the horizon.

    Args:
        task: Sampled task.
        policy: Policy producing action chunks; chunks run open loop.
        config: Pipeline configuration.
        camera_config: ``fixed`` configurations zero every head action;
            ``+wrist`` configurations attach the wrist view.
        seed: Passed to ``policy.reset``.
        log_path: Where to write the trajectory log.
        record_every: Keep the observation every this many steps.
        observation_filter: Applied to observations before the policy sees them.

    Returns:
        The verdict and the full per-step record.
    """
    if camera_config not in CAMERA_CONFIGS:
        raise ConfigError([f"Unknown camera configuration {camera_config!r}; expected one of {', '.join(CAMERA_CONFIGS)}"])
    config = config or PipelineConfig()
    fixed_head = camera_config.startswith("fixed")
    wrist = camera_config.endswith("+wrist")
    state = reset(task, config)
    policy.reset(task, seed)
    result = EpisodeResult(task, "pending", None, 0, camera_config=camera_config)
    with TrajectoryLog(log_path) as log:
        log.write({"kind": "episode", "camera_config": camera_config, "policy_seed": seed, **task.to_dict()})
        try:
            while not state.terminated:
                recording = record_every is not None and state.step_count % record_every == 0
                obs = observe(state, wrist) if policy.needs_observation or recording else None
                if recording:
                    result.samples.append(
                        EpisodeSample(
                            state.step_count,
                            obs,
                            state.proprio.as_vector(),
                            (state.camera.pitch, state.camera.yaw),
                        )
                    )
                if obs is not None and observation_filter is not None:
                    obs = observation_filter(obs)
                heads, bodies = policy.act(state, obs)
                for a_head, a_body in zip(np.asarray(heads, dtype=np.float64), np.asarray(bodies, dtype=np.float64)):
                    if fixed_head:
                        a_head = np.zeros(2)
                    state = step(state, a_head, a_body, config)
                    measures = measure(state, task)
                    check_success(state, task, measures)
                    result.head_actions.append(a_head)
                    result.body_actions.append(a_body)
                    record = {
                        "kind": "step",
                        "a_head": a_head,
                        "a_body": a_body,
                        "measures": measures,
                        "oracle_phase": getattr(policy, "phase", None),
                        **state.summary(),
                    }
                    result.records.append(_jsonable(record))
                    log.write(record)
                    if state.terminated:
                        break
        except OracleFailure as e:
            logger.info(f"Oracle failed on {task.family}/{task.visibility} seed {task.seed}: {e}")
            result.oracle_failure = True
            state.terminated, state.verdict, state.reason = True, "failed", "oracle_failure"
        result.verdict, result.reason, result.steps = state.verdict, state.reason, state.step_count
        log.write({"kind": "verdict", **result.to_dict(), "phase_ledger": list(state.phase_ledger)})
    return result
