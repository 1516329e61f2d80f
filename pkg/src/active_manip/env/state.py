"""Episode state and the per-step world update."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from ..config import PipelineConfig
from ..errors import DimensionError
from ..world.arm import D_BODY, N_ARM_JOINTS, ArmModel, ProprioState
from ..world.camera import CameraState, apply_head_delta
from ..world.liquid import POUR_TILT, pour_step
from ..world.render import Observation, render
from ..world.scene import ObjectInstance, Scene, drive_container, support_below
from .tasks import TaskSpec

logger = logging.getLogger(__name__)

HELD = "held"
GRIPPER_CLOSED = 0.2
GRIPPER_OPEN = 0.8
SLIP_FACTOR = 3.0
INTERIOR_SUFFIX = "/interior"
DROP_EPS = 1e-6


@dataclass(frozen=True)
class CarryOffset:
    """Held object pose relative to the fingertip, in the base-yaw frame."""

    dx: float
    dy: float
    dz: float
    dyaw: float

    @classmethod
    def capture(cls, obj: ObjectInstance, tip, base_yaw: float) -> "CarryOffset":
        c, s = math.cos(base_yaw), math.sin(base_yaw)
        wx, wy, wz = (obj.position[i] - tip[i] for i in range(3))
        return cls(c * wx + s * wy, -s * wx + c * wy, wz, obj.yaw - base_yaw)

    def apply(self, tip, base_yaw: float) -> tuple[tuple[float, float, float], float]:
        """World position and yaw of the held object."""
        c, s = math.cos(base_yaw), math.sin(base_yaw)
        position = (
            float(tip[0] + c * self.dx - s * self.dy),
            float(tip[1] + s * self.dx + c * self.dy),
            float(tip[2] + self.dz),
        )
        return position, math.remainder(base_yaw + self.dyaw, 2.0 * math.pi)


@dataclass
class EpisodeState:
    """Mutable state of one episode.

    Attributes:
        task: The task being run.
        arm: Kinematic model used for every step.
        scene: Current scene.
        camera: Current head camera.
        proprio: Arm joints, gripper, attachment and head angles.
        step_count: Steps taken so far.
        phase_ledger: Completed phases, in order; only ever grows.
        hold_counter: Consecutive steps the final goal has held.
        spilled: Liquid units that missed the receptacle.
        terminated: Whether the episode is over.
        reason: Why it ended (``success``, ``horizon``, ``spill``, ``fault``).
        verdict: ``pending``, ``success`` or ``failed``.
        engaged_container: Container whose handle the gripper holds.
        carry: Held object offset, when something is attached.
        speeds: Per-object displacement over the last step, in metres.
        head_clamped: Whether the last head action hit the limits.
    """

    task: TaskSpec
    arm: ArmModel
    scene: Scene
    camera: CameraState
    proprio: ProprioState
    step_count: int = 0
    phase_ledger: list[str] = field(default_factory=list)
    hold_counter: int = 0
    spilled: int = 0
    terminated: bool = False
    reason: Optional[str] = None
    verdict: str = "pending"
    engaged_container: Optional[str] = None
    carry: Optional[CarryOffset] = None
    speeds: dict[str, float] = field(default_factory=dict)
    head_clamped: bool = False

    def copy(self) -> "EpisodeState":
        clone = copy.copy(self)
        clone.phase_ledger = list(self.phase_ledger)
        clone.speeds = dict(self.speeds)
        return clone

    @property
    def tip(self) -> tuple[float, float, float]:
        return self.arm.forward_kinematics(self.proprio.arm_joints).position

    def summary(self) -> dict[str, Any]:
        """JSON-ready snapshot used in trajectory logs."""
        return {
            "step": self.step_count,
            "camera": [self.camera.pitch, self.camera.yaw],
            "arm_joints": [float(q) for q in self.proprio.arm_joints],
            "gripper": self.proprio.gripper,
            "attached": self.proprio.attached_object,
            "engaged": self.engaged_container,
            "phase_ledger": list(self.phase_ledger),
            "hold_counter": self.hold_counter,
            "spilled": self.spilled,
            "verdict": self.verdict,
            "reason": self.reason,
            "objects": {
                o.id: {
                    "position": list(o.position),
                    "yaw": o.yaw,
                    "half_extents": list(o.half_extents),
                    "liquid_units": o.liquid_units,
                }
                for o in self.scene.objects
            },
            "containers": {
                c.id: {"kind": c.joint.kind, "value": c.joint.value, "limit": c.joint.limit}
                for c in self.scene.containers
            },
            "speeds": dict(self.speeds),
        }


def reset(task: TaskSpec, config: Optional[PipelineConfig] = None) -> EpisodeState:
    """Start an episode from the task's scene and head pose.

    All randomness was consumed when the task was sampled, so the same
    ``TaskSpec`` always yields the same initial state.
    """
    config = config or PipelineConfig()
    camera = task.camera
    proprio = ProprioState(head=(camera.pitch, camera.yaw))
    return EpisodeState(
        task=task,
        arm=ArmModel.from_config(config.world.arm),
        scene=task.scene,
        camera=camera,
        proprio=proprio,
        speeds={o.id: 0.0 for o in task.scene.objects},
    )


def observe(state: EpisodeState, wrist: bool = False) -> Observation:
    return render(state.scene, state.camera, state.proprio, state.arm, wrist=wrist)


def _as_action(value, size: int, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    if array.shape != (size,):
        raise DimensionError(f"{name} action must have shape ({size},), got {array.shape}", layer="action")
    return array


def _set_interior(scene: Scene, container_id: str, object_id: str, inside: bool) -> Scene:
    container = scene.container(container_id)
    contents = tuple(i for i in container.interior_objects if i != object_id)
    if inside:
        contents += (object_id,)
    return scene.with_container(replace(container, interior_objects=contents))


def _release(scene: Scene, obj: ObjectInstance) -> Scene:
    x, y, z = obj.position
    hz = obj.half_extents[2]
    name, height = support_below(scene, x, y, z - hz + DROP_EPS)
    dropped = replace(obj, position=(x, y, height + hz), support=name)
    scene = scene.with_object(dropped)
    if name.endswith(INTERIOR_SUFFIX):
        scene = _set_interior(scene, name[: -len(INTERIOR_SUFFIX)], obj.id, inside=True)
    logger.debug(f"Released {obj.id} onto {name} at height {height:.3f}")
    return scene


def _handle_near(scene: Scene, tip, radius: float) -> Optional[str]:
    best, best_dist = None, radius
    for container in scene.containers:
        dist = float(np.linalg.norm(np.subtract(container.handle_point(), tip)))
        if dist <= best_dist:
            best, best_dist = container.id, dist
    return best


def _object_near(scene: Scene, tip, radius: float) -> Optional[ObjectInstance]:
    best, best_dist = None, radius
    for obj in scene.objects:
        if not obj.graspable or scene.is_hidden(obj.id):
            continue
        dist = float(np.linalg.norm(np.subtract(obj.grasp_point, tip)))
        if dist <= best_dist:
            best, best_dist = obj, dist
    return best


def _pour(state: EpisodeState, holder: ObjectInstance, pitch: float) -> None:
    scene = state.scene
    others = [o for o in scene.objects if o.id != holder.id and o.capacity > 0 and not scene.is_hidden(o.id)]
    if not others:
        if abs(pitch) > POUR_TILT and holder.liquid_units > 0:
            state.scene = scene.with_object(replace(holder, liquid_units=holder.liquid_units - 1))
            state.spilled += 1
        return
    receptacle = min(
        others,
        key=lambda o: math.hypot(o.lip_point[0] - holder.position[0], o.lip_point[1] - holder.position[1]),
    )
    result = pour_step(holder, receptacle, pitch, state.spilled)
    state.scene = scene.with_object(result.holder).with_object(result.receptacle)
    state.spilled = result.spilled


def step(state: EpisodeState, a_head, a_body, config: Optional[PipelineConfig] = None) -> EpisodeState:
    """Apply one head and body action and return the next state.

    Args:
        state: Current state; left untouched.
        a_head: ``(dpitch, dyaw)`` in degrees.
        a_body: Arm joint deltas in radians followed by the gripper delta.
        config: Step caps and contact radii.

    Raises:
        ValueError: if the episode already terminated.
        DimensionError: for wrongly shaped actions.
    """
    if state.terminated:
        raise ValueError(f"Episode already terminated ({state.reason})")
    env = (config or PipelineConfig()).env
    a_head = _as_action(a_head, 2, "Head")
    a_body = _as_action(a_body, D_BODY, "Body")
    nxt = state.copy()
    nxt.step_count += 1
    if not (np.all(np.isfinite(a_head)) and np.all(np.isfinite(a_body))):
        logger.warning(f"Non-finite action at step {nxt.step_count}; terminating")
        nxt.terminated, nxt.reason, nxt.verdict = True, "fault", "failed"
        return nxt

    arm = state.arm
    head = np.clip(a_head, -env.head_step_cap, env.head_step_cap)
    nxt.camera, nxt.head_clamped = apply_head_delta(state.camera, head)

    q_old = np.asarray(state.proprio.arm_joints, dtype=np.float64)
    dq = np.clip(a_body[:N_ARM_JOINTS], -env.arm_step_cap, env.arm_step_cap)
    q_new = arm.clamp(q_old + dq)
    dg = float(np.clip(a_body[N_ARM_JOINTS], -env.gripper_step_cap, env.gripper_step_cap))
    gripper = float(np.clip(state.proprio.gripper + dg, 0.0, 1.0))
    tip_old = np.asarray(arm.forward_kinematics(q_old).position)
    pose = arm.forward_kinematics(q_new)
    tip_new = np.asarray(pose.position)

    before = {o.id: o.position for o in state.scene.objects}
    attached = state.proprio.attached_object
    scene = state.scene

    if attached is not None:
        obj = scene.object(attached)
        if gripper > GRIPPER_OPEN:
            scene = _release(scene, obj)
            attached, nxt.carry = None, None
        else:
            position, yaw = state.carry.apply(tip_new, pose.base_yaw)
            scene = scene.with_object(replace(obj, position=position, yaw=yaw))
    else:
        engaged = state.engaged_container if gripper < GRIPPER_CLOSED else None
        if engaged is None and gripper < GRIPPER_CLOSED:
            engaged = _handle_near(scene, tip_old, env.grasp_radius)
            if engaged is not None:
                logger.debug(f"Engaged handle of {engaged}")
        if engaged is not None:
            delta = scene.container(engaged).joint_delta_for(tip_new - tip_old)
            scene = drive_container(scene, engaged, delta)
            handle = np.asarray(scene.container(engaged).handle_point())
            if np.linalg.norm(tip_new - handle) > SLIP_FACTOR * env.grasp_radius:
                logger.debug(f"Fingertip slipped off {engaged}")
                engaged = None
        elif gripper < GRIPPER_CLOSED:
            obj = _object_near(scene, tip_new, env.grasp_radius)
            if obj is not None:
                container = scene.container_of(obj.id)
                if container is not None:
                    scene = _set_interior(scene, container.id, obj.id, inside=False)
                scene = scene.with_object(replace(obj, support=HELD))
                nxt.carry = CarryOffset.capture(obj, tip_new, pose.base_yaw)
                attached = obj.id
                logger.debug(f"Grasped {obj.id}")
        nxt.engaged_container = engaged

    nxt.scene = scene
    if attached is not None:
        held = scene.object(attached)
        if held.capacity > 0:
            _pour(nxt, held, pose.wrist_pitch)

    nxt.speeds = {
        o.id: float(np.linalg.norm(np.subtract(o.position, before.get(o.id, o.position))))
        for o in nxt.scene.objects
    }
    nxt.proprio = ProprioState(
        arm_joints=tuple(float(q) for q in q_new),
        gripper=gripper,
        attached_object=attached,
        head=(nxt.camera.pitch, nxt.camera.yaw),
    )
    return nxt
