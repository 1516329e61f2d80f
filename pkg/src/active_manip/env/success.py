"""Per-family success criteria and the phase/hold state machine.

Each phase name maps to a criterion in ``CRITERIA``. A criterion reads the
raw measurements produced by ``measure`` together with the task goals, so a
logged trajectory can be re-judged from its measurement records alone.
"""

from __future__ import annotations

import logging
import math
from typing import Any, Optional

from ..registry import Registry
from .state import EpisodeState
from .tasks import TaskSpec

logger = logging.getLogger(__name__)

SUCCESS = "success"
PENDING = "pending"
FAILED = "failed"

LIFT_THRESHOLD = 0.05
ORIENT_THRESHOLD_DEG = 15.0
PRISMATIC_OPEN_FRACTION = 0.9
REVOLUTE_OPEN_DEG = 80.0
CLOSED_FRACTION = 0.05
PLACE_THRESHOLD = 0.05
POUR_TRANSFER_FRACTION = 0.8
SPILL_FRACTION = 0.1

CRITERIA = Registry("success criterion")


def _at_rest(m: dict[str, Any], goals: dict[str, Any]) -> bool:
    return m["speed"] is not None and m["speed"] < goals["velocity_eps"]


@CRITERIA.register("pick", "Object more than 5 cm above its support and still")
def _pick(m: dict[str, Any], goals: dict[str, Any]) -> bool:
    return m["height"] is not None and m["height"] > LIFT_THRESHOLD and _at_rest(m, goals)


@CRITERIA.register("orient", "Yaw within 15 degrees of the target, released and still")
def _orient(m: dict[str, Any], goals: dict[str, Any]) -> bool:
    return (
        m["yaw_error_deg"] is not None
        and m["yaw_error_deg"] < ORIENT_THRESHOLD_DEG
        and not m["attached"]
        and _at_rest(m, goals)
    )


@CRITERIA.register("open", "Drawer past 90% of its travel or door past 80 degrees")
def _open(m: dict[str, Any], goals: dict[str, Any]) -> bool:
    if m["joint_kind"] == "prismatic":
        return m["openness"] > PRISMATIC_OPEN_FRACTION
    if m["joint_kind"] == "revolute":
        return m["joint_angle_deg"] > REVOLUTE_OPEN_DEG
    return False


@CRITERIA.register("close", "Container below 5% open")
def _close(m: dict[str, Any], goals: dict[str, Any]) -> bool:
    return m["openness"] is not None and m["openness"] < CLOSED_FRACTION


@CRITERIA.register("place", "Object within 5 cm of the target, released and still")
def _place(m: dict[str, Any], goals: dict[str, Any]) -> bool:
    return (
        m["position_error"] is not None
        and m["position_error"] < PLACE_THRESHOLD
        and not m["attached"]
        and _at_rest(m, goals)
    )


@CRITERIA.register("pour", "More than 80% of the liquid transferred with under 10% spilled")
def _pour(m: dict[str, Any], goals: dict[str, Any]) -> bool:
    source = m["source_volume"]
    if not source:
        return False
    return m["transferred"] / source > POUR_TRANSFER_FRACTION and m["spilled"] / source < SPILL_FRACTION


def _yaw_error_deg(yaw: float, target: float) -> float:
    # Boxes look the same after a half turn.
    return abs(math.degrees(math.remainder(yaw - target, math.pi)))


def measure(state: EpisodeState, task: TaskSpec) -> dict[str, Any]:
    """Raw quantities every criterion is judged from."""
    scene, goals, roles = state.scene, task.goals, task.bindings
    m: dict[str, Any] = {
        "step": state.step_count,
        "height": None,
        "speed": None,
        "attached": False,
        "yaw_error_deg": None,
        "position_error": None,
        "openness": None,
        "joint_kind": None,
        "joint_angle_deg": None,
        "transferred": 0,
        "spilled": state.spilled,
        "source_volume": goals.get("source_volume", 0),
    }
    subject = roles.get("object") or roles.get("holder")
    if subject is not None:
        obj = scene.object(subject)
        m["height"] = obj.position[2] - obj.half_extents[2] - goals["support_height"]
        m["speed"] = state.speeds.get(subject, 0.0)
        m["attached"] = state.proprio.attached_object == subject
        if "target_yaw" in goals:
            m["yaw_error_deg"] = _yaw_error_deg(obj.yaw, goals["target_yaw"])
        if "target_position" in goals:
            m["position_error"] = math.dist(obj.position, goals["target_position"])
    if "container" in roles:
        joint = scene.container(roles["container"]).joint
        m["openness"] = joint.openness
        m["joint_kind"] = joint.kind
        m["joint_angle_deg"] = math.degrees(joint.value) if joint.kind == "revolute" else None
    if "receptacle" in roles:
        m["transferred"] = scene.object(roles["receptacle"]).liquid_units - goals["receptacle_start"]
    return m


def advance(
    measures: dict[str, Any],
    goals: dict[str, Any],
    phases: tuple[str, ...],
    ledger: list[str],
    hold_counter: int,
    hold_duration: int,
) -> tuple[str, list[str], int]:
    """One step of the phase/hold machine.

    Returns:
        ``(verdict, ledger, hold_counter)``; the ledger only ever grows.
    """
    source = measures["source_volume"]
    if source and measures["spilled"] / source >= SPILL_FRACTION:
        return FAILED, ledger, 0
    ledger = list(ledger)
    final = len(phases) - 1
    while len(ledger) < final and CRITERIA.call(phases[len(ledger)], measures, goals):
        ledger.append(phases[len(ledger)])
    if len(ledger) == final and CRITERIA.call(phases[final], measures, goals):
        hold_counter += 1
    else:
        hold_counter = 0
    if hold_counter >= hold_duration:
        ledger.append(phases[final])
        return SUCCESS, ledger, hold_counter
    return PENDING, ledger, hold_counter


def check_success(state: EpisodeState, task: TaskSpec, measures: Optional[dict[str, Any]] = None) -> str:
    """Update ``state``'s ledger, hold counter and verdict; return the verdict.

    A terminal verdict is latched: later calls return it unchanged.
    """
    if state.verdict != PENDING:
        return state.verdict
    measures = measures or measure(state, task)
    verdict, state.phase_ledger, state.hold_counter = advance(
        measures, task.goals, task.phases, state.phase_ledger, state.hold_counter, task.hold_duration
    )
    if verdict == FAILED:
        state.terminated, state.reason = True, "spill"
    elif verdict == SUCCESS:
        state.terminated, state.reason = True, "success"
    elif state.step_count >= task.horizon:
        verdict = FAILED
        state.terminated, state.reason = True, "horizon"
    state.verdict = verdict
    if state.terminated:
        logger.debug(f"{task.family} episode ended at step {state.step_count}: {verdict} ({state.reason})")
    return verdict
