"""Scripted expert with privileged scene access.

The script is a generator: each ``next`` returns one ``(a_head, a_body)``
pair computed from the state the policy was last shown. Phases run in order
LOOK, REMOVE_OCCLUDER (when the target stays mostly hidden), REACH, GRASP,
the family's manipulation, RELEASE and finally HOLD.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Iterator, Optional

import numpy as np

from ..config import PipelineConfig
from ..errors import OracleFailure
from ..viewgen.views import anchor_offset_px
from ..world.arm import D_BODY, N_ARM_JOINTS, ArmModel
from ..world.camera import camera_delta_to
from ..world.render import Observation, unobstructed_count
from .reach import LIFT_CLEARANCE
from .state import EpisodeState
from .tasks import POUR_PITCH, TaskSpec, open_goal, pour_point

logger = logging.getLogger(__name__)

Action = tuple[np.ndarray, np.ndarray]
GoalFn = Callable[[EpisodeState], np.ndarray]

LOOK_TOLERANCE_PX = 2.0
LOOK_MAX_STEPS = 200
REACH_TOLERANCE = 0.01
IMPROVEMENT_EPS = 1e-4
APPROACH_HEIGHT = 0.06
OCCLUDER_LIFT = 0.08
RETRACT_HEIGHT = 0.08
PLACE_HOVER = 0.06
PLACE_DROP = 0.005
SETTLE_STEPS = 3
DRAWER_STEP = 0.03
CABINET_STEP = 0.10
DRAWER_TOLERANCE = 0.005
CABINET_TOLERANCE = 0.02
POUR_PITCH_RATE = 0.08
REVEAL_FRACTION = 0.5
MAX_POUR_STEPS = 200


class OraclePolicy:
    """Phase-machine expert used to generate demonstrations.

    Attributes:
        phase: Name of the phase the last action belongs to.
        needs_observation: Always true; LOOK is gated on what the head sees.
    """

    needs_observation = True

    def __init__(self, config: Optional[PipelineConfig] = None) -> None:
        self.config = config or PipelineConfig()
        self.env = self.config.env
        self.arm = ArmModel.from_config(self.config.world.arm)
        self.task: Optional[TaskSpec] = None
        self.phase = "idle"
        self._state: Optional[EpisodeState] = None
        self._obs: Optional[Observation] = None
        self._script: Optional[Iterator[Action]] = None

    def reset(self, task: TaskSpec, seed: int = 0) -> None:
        """Restart the script for ``task``. ``seed`` is ignored."""
        self.task = task
        self.phase = "look"
        self._script = self._run(task)

    def action(self, state: EpisodeState, obs: Optional[Observation]) -> Action:
        """Next ``(a_head, a_body)``.

        Raises:
            OracleFailure: when the script cannot make progress.
        """
        if self._script is None:
            raise RuntimeError("OraclePolicy.reset must be called before action")
        self._state, self._obs = state, obs
        try:
            return next(self._script)
        except StopIteration:
            self.phase = "hold"
            return self._zero()

    def act(self, state: EpisodeState, obs: Optional[Observation]) -> tuple[np.ndarray, np.ndarray]:
        a_head, a_body = self.action(state, obs)
        return a_head[None, :], a_body[None, :]

    # Primitive moves

    @staticmethod
    def _zero() -> Action:
        return np.zeros(2), np.zeros(D_BODY)

    def _body(self, dq, dg: float = 0.0) -> Action:
        body = np.zeros(D_BODY)
        body[:N_ARM_JOINTS] = dq
        body[N_ARM_JOINTS] = dg
        return np.zeros(2), body

    def _look(self, anchor_id: str) -> Iterator[Action]:
        self.phase = "look"
        cap = self.env.head_step_cap
        previous = None
        for _ in range(LOOK_MAX_STEPS):
            state = self._state
            camera = state.camera
            anchor = state.scene.anchor_point(anchor_id)
            if anchor_offset_px(camera, anchor) <= LOOK_TOLERANCE_PX:
                break
            pose = (camera.pitch, camera.yaw)
            if previous is not None and pose == previous:
                logger.debug(f"Head limits stop LOOK at {anchor_id}")
                break
            previous = pose
            delta = np.clip(camera_delta_to(camera, anchor), -cap, cap)
            yield np.asarray(delta, dtype=np.float64), np.zeros(D_BODY)
        else:
            raise OracleFailure(f"LOOK did not settle on {anchor_id}")
        self._perceive(anchor_id)

    def _perceive(self, anchor_id: str) -> None:
        """Manipulation only starts once the head has seen the anchor (or what hides it)."""
        obs = self._obs
        if obs is None:
            return
        occluder = self.task.bindings.get("occluder")
        if obs.pixel_count(anchor_id) >= 1:
            return
        if occluder is not None and obs.pixel_count(occluder) >= 1:
            return
        raise OracleFailure(f"{anchor_id} is not visible after LOOK")

    def _reach(
        self,
        goal: GoalFn,
        pitch: float = 0.0,
        pitch_weight: float = 0.1,
        tolerance: float = REACH_TOLERANCE,
        gripper_delta: float = 0.0,
    ) -> Iterator[Action]:
        cap = self.env.arm_step_cap
        best = math.inf
        stalled = 0
        while True:
            state = self._state
            q = np.asarray(state.proprio.arm_joints)
            target = goal(state)
            error = float(np.linalg.norm(target - np.asarray(state.tip)))
            if error <= tolerance:
                return
            if error < best - IMPROVEMENT_EPS:
                best, stalled = error, 0
            else:
                stalled += 1
                if stalled >= self.env.stagnation_steps:
                    raise OracleFailure(
                        f"IK stagnated {error:.3f} m from {np.round(target, 3).tolist()} in phase {self.phase}"
                    )
            q_goal, _ = self.arm.solve_ik(q, target, self.env.ik_iterations, pitch, pitch_weight)
            dq = q_goal - q
            largest = float(np.max(np.abs(dq)))
            if largest > cap:
                dq = dq * (cap / largest)
            yield self._body(dq, gripper_delta)

    def _reach_point(self, point, **kwargs) -> Iterator[Action]:
        target = np.asarray(point, dtype=np.float64)
        return self._reach(lambda _: target, **kwargs)

    def _carry(self, center) -> Iterator[Action]:
        """Move the held object's centre to ``center``."""
        center = np.asarray(center, dtype=np.float64)

        def tip_goal(state: EpisodeState) -> np.ndarray:
            held = state.scene.object(state.proprio.attached_object)
            return center - (np.asarray(held.position) - np.asarray(state.tip))

        return self._reach(tip_goal)

    def _grasp(self) -> Iterator[Action]:
        self.phase = "grasp"
        cap = self.env.gripper_step_cap
        while True:
            state = self._state
            proprio = state.proprio
            if proprio.attached_object is not None or state.engaged_container is not None:
                return
            if proprio.gripper <= 0.0:
                raise OracleFailure("Gripper closed on nothing")
            yield self._body(np.zeros(N_ARM_JOINTS), -cap)

    def _release(self) -> Iterator[Action]:
        self.phase = "release"
        cap = self.env.gripper_step_cap
        while self._state.proprio.gripper < 1.0:
            yield self._body(np.zeros(N_ARM_JOINTS), cap)
        yield from self._reach_point(np.add(self._state.tip, (0.0, 0.0, RETRACT_HEIGHT)))

    def _settle(self, steps: int = SETTLE_STEPS) -> Iterator[Action]:
        for _ in range(steps):
            yield self._zero()

    # Composite skills

    def _pick(self, object_id: str, lift: float) -> Iterator[Action]:
        self.phase = "reach"
        grasp = np.asarray(self._state.scene.object(object_id).grasp_point)
        yield from self._reach_point(grasp + (0.0, 0.0, APPROACH_HEIGHT))
        yield from self._reach_point(grasp)
        yield from self._grasp()
        if self._state.proprio.attached_object != object_id:
            raise OracleFailure(f"Grasped {self._state.proprio.attached_object} instead of {object_id}")
        self.phase = "lift"
        yield from self._reach_point(np.add(self._state.tip, (0.0, 0.0, lift)))

    def _place_at(self, center) -> Iterator[Action]:
        self.phase = "transport"
        center = np.asarray(center, dtype=np.float64)
        yield from self._carry(center + (0.0, 0.0, PLACE_HOVER))
        yield from self._carry(center + (0.0, 0.0, PLACE_DROP))
        yield from self._release()

    def _drive(self, container_id: str, goal_value: float) -> Iterator[Action]:
        self.phase = "reach"
        handle = np.asarray(self._state.scene.container(container_id).handle_point())
        yield from self._reach_point(handle)
        yield from self._grasp()
        if self._state.engaged_container != container_id:
            raise OracleFailure(f"Failed to take hold of {container_id}'s handle")
        self.phase = "drive"
        container = self._state.scene.container(container_id)
        step, tolerance = (
            (DRAWER_STEP, DRAWER_TOLERANCE) if container.kind == "drawer" else (CABINET_STEP, CABINET_TOLERANCE)
        )
        cap = self.env.arm_step_cap
        best, stalled = math.inf, 0
        while True:
            state = self._state
            if state.engaged_container != container_id:
                raise OracleFailure(f"Lost hold of {container_id}")
            container = state.scene.container(container_id)
            remaining = goal_value - container.joint.value
            if abs(remaining) <= tolerance:
                break
            if abs(remaining) < best - IMPROVEMENT_EPS:
                best, stalled = abs(remaining), 0
            else:
                stalled += 1
                if stalled >= self.env.stagnation_steps:
                    raise OracleFailure(f"{container_id} stuck at {container.joint.value:.3f}")
            target = container.handle_point(container.joint.value + float(np.clip(remaining, -step, step)))
            q = np.asarray(state.proprio.arm_joints)
            q_goal, _ = self.arm.solve_ik(q, target, self.env.ik_iterations, 0.0)
            dq = q_goal - q
            largest = float(np.max(np.abs(dq)))
            if largest > cap:
                dq = dq * (cap / largest)
            yield self._body(dq, -self.env.gripper_step_cap)
        yield from self._release()

    def _remove_occluder(self, target_id: str) -> Iterator[Action]:
        occluder = self.task.bindings.get("occluder")
        if occluder is None:
            return
        state = self._state
        reference = unobstructed_count(state.scene, state.camera, target_id)
        visible = self._obs.pixel_count(target_id) if self._obs is not None else 0
        if reference and visible / reference >= REVEAL_FRACTION:
            return
        logger.debug(f"{target_id} shows {visible}/{reference} px; moving {occluder} aside")
        yield from self._pick(occluder, OCCLUDER_LIFT)
        self.phase = "remove_occluder"
        yield from self._place_at(self.task.goals["occluder_destination"])
        yield from self._look(target_id)

    def _reorient(self, object_id: str) -> Iterator[Action]:
        goals = self.task.goals
        start = np.asarray(self._state.scene.object(object_id).position)
        yield from self._pick(object_id, APPROACH_HEIGHT)
        self.phase = "rotate"
        bx, by, _ = self.arm.base
        delta = goals["rotation"]
        c, s = math.cos(delta), math.sin(delta)
        rx, ry = start[0] - bx, start[1] - by
        turned = np.array([bx + c * rx - s * ry, by + s * rx + c * ry, start[2]])
        yield from self._carry(turned + (0.0, 0.0, APPROACH_HEIGHT))
        yield from self._carry(turned + (0.0, 0.0, PLACE_DROP))
        yield from self._release()

    def _pour(self, holder_id: str, receptacle_id: str) -> Iterator[Action]:
        yield from self._pick(holder_id, LIFT_CLEARANCE)
        self.phase = "transport"
        scene = self._state.scene
        yield from self._carry(pour_point(scene.object(holder_id), scene.object(receptacle_id)))
        self.phase = "pour"
        anchor = np.asarray(self._state.tip)
        cap = self.env.arm_step_cap
        pitch = self.arm.forward_kinematics(self._state.proprio.arm_joints).wrist_pitch
        for _ in range(MAX_POUR_STEPS):
            state = self._state
            if state.scene.object(holder_id).liquid_units == 0:
                return
            pitch = max(POUR_PITCH, pitch - POUR_PITCH_RATE)
            q = np.asarray(state.proprio.arm_joints)
            q_goal, _ = self.arm.solve_ik(q, anchor, self.env.ik_iterations, pitch, 1.0)
            dq = q_goal - q
            largest = float(np.max(np.abs(dq)))
            if largest > cap:
                dq = dq * (cap / largest)
            yield self._body(dq)
        raise OracleFailure(f"{holder_id} still holds liquid after {MAX_POUR_STEPS} pour steps")

    def _run(self, task: TaskSpec) -> Iterator[Action]:
        family, roles, goals = task.family, task.bindings, task.goals
        yield from self._look(task.anchor_id)
        yield from self._remove_occluder(task.anchor_id)
        if family == "pick":
            yield from self._pick(roles["object"], LIFT_CLEARANCE)
        elif family == "reorient":
            yield from self._reorient(roles["object"])
        elif family == "pick_and_place":
            yield from self._pick(roles["object"], LIFT_CLEARANCE)
            yield from self._settle()
            yield from self._place_at(goals["target_position"])
        elif family == "pour":
            yield from self._pour(roles["holder"], roles["receptacle"])
        elif family.startswith("fetch"):
            container = roles["container"]
            yield from self._drive(container, open_goal(self._state.scene.container(container)))
            yield from self._look(roles["object"])
            yield from self._pick(roles["object"], LIFT_CLEARANCE)
            yield from self._settle()
            yield from self._place_at(goals["target_position"])
            yield from self._look(container)
            yield from self._drive(container, 0.0)
        else:
            container = roles["container"]
            if family.startswith("open"):
                yield from self._drive(container, open_goal(self._state.scene.container(container)))
            if family.startswith("close") or family.startswith("open_close"):
                yield from self._drive(container, 0.0)
        self.phase = "hold"
