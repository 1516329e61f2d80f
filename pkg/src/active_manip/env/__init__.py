"""Episodic manipulation tasks, the scripted expert and demonstration export."""

from .demos import DemoRecord, DemoSet, export_demos, generate_demos, read_demos
from .oracle import OraclePolicy
from .rollout import CAMERA_CONFIGS, EpisodePolicy, EpisodeResult, read_trajectory, rollout
from .state import EpisodeState, observe, reset, step
from .success import CRITERIA, FAILED, PENDING, SUCCESS, check_success, measure
from .tasks import FAMILY_PHASES, TASK_FAMILIES, TaskSpec, sample_task, visibility_modes

__all__ = [
    "CAMERA_CONFIGS",
    "CRITERIA",
    "DemoRecord",
    "DemoSet",
    "EpisodePolicy",
    "EpisodeResult",
    "EpisodeState",
    "FAILED",
    "FAMILY_PHASES",
    "OraclePolicy",
    "PENDING",
    "SUCCESS",
    "TASK_FAMILIES",
    "TaskSpec",
    "check_success",
    "export_demos",
    "generate_demos",
    "measure",
    "observe",
    "read_demos",
    "read_trajectory",
    "reset",
    "rollout",
    "sample_task",
    "step",
    "visibility_modes",
]
