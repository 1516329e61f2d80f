"""Tests for the per-step world update: grasping, carrying, handles and pouring."""

import dataclasses

import numpy as np
import pytest

from active_manip.env.state import HELD, CarryOffset, reset, step
from active_manip.errors import DimensionError
from active_manip.world.arm import D_BODY, ArmModel
from active_manip.world.articulation import Container
from active_manip.world.layout import BASE_SURFACES, ContainerSlot
from tests.factories import make_object, make_scene, make_task

# Fingertip over the table, about (0.508, 0.0, 0.837).
OVER_TABLE = np.array([0.0, 0.8, -1.4, -0.4])
TABLE = next(s for s in BASE_SURFACES if s.name == "table")


def _zero_body():
    return np.zeros(D_BODY)


def _body(dq=(0.0, 0.0, 0.0, 0.0), gripper=0.0):
    return np.array([*dq, gripper], dtype=np.float64)


def _with_arm(state, q, gripper):
    state.proprio = dataclasses.replace(state.proprio, arm_joints=tuple(float(v) for v in q), gripper=gripper)
    return state


def _drive_to(state, q_target, gripper=0.0, steps=40):
    for _ in range(steps):
        dq = np.asarray(q_target) - np.asarray(state.proprio.arm_joints)
        state = step(state, np.zeros(2), _body(dq, gripper))
    return state


def _grasped_state():
    tip = ArmModel().forward_kinematics(OVER_TABLE).position
    apple = make_object("apple", position=tip)
    task = make_task(make_scene([apple]), bindings={"object": "apple"})
    state = _with_arm(reset(task), OVER_TABLE, gripper=0.25)
    return step(state, np.zeros(2), _body(gripper=-0.25))


class TestStepBasics:
    """Shape checks, termination and the identity action."""

    def test_zero_action_changes_nothing_but_the_counter(self):
        # Arrange
        task = make_task(make_scene([make_object("apple")]))
        state = reset(task)

        # Act
        nxt = step(state, np.zeros(2), _zero_body())

        # Assert
        assert nxt.step_count == 1
        assert state.step_count == 0
        assert nxt.scene.to_canonical_text() == state.scene.to_canonical_text()
        assert nxt.proprio == state.proprio
        assert (nxt.camera.pitch, nxt.camera.yaw) == (state.camera.pitch, state.camera.yaw)
        assert nxt.speeds == {"apple": 0.0}

    def test_head_action_is_capped_and_mirrored_in_proprio(self):
        task = make_task(make_scene([make_object("apple")]))

        nxt = step(reset(task), np.array([100.0, -3.0]), _zero_body())

        assert nxt.camera.pitch == pytest.approx(6.0)
        assert nxt.camera.yaw == pytest.approx(-3.0)
        assert nxt.proprio.head == (nxt.camera.pitch, nxt.camera.yaw)

    def test_non_finite_action_ends_with_a_fault(self):
        task = make_task(make_scene([make_object("apple")]))

        nxt = step(reset(task), np.array([np.nan, 0.0]), _zero_body())

        assert nxt.terminated
        assert nxt.reason == "fault"
        assert nxt.verdict == "failed"

    def test_wrong_body_shape_raises(self):
        task = make_task(make_scene([make_object("apple")]))

        with pytest.raises(DimensionError) as excinfo:
            step(reset(task), np.zeros(2), np.zeros(D_BODY + 1))

        assert excinfo.value.layer == "action"

    def test_stepping_a_terminated_episode_raises(self):
        task = make_task(make_scene([make_object("apple")]))
        state = reset(task)
        state.terminated, state.reason = True, "success"

        with pytest.raises(ValueError, match="already terminated"):
            step(state, np.zeros(2), _zero_body())


class TestGraspAndCarry:
    """Closing the gripper near an object attaches it to the fingertip."""

    def test_fingertip_starts_over_the_table(self):
        tip = ArmModel().forward_kinematics(OVER_TABLE).position

        assert TABLE.contains(tip[0], tip[1])
        assert tip[2] > TABLE.height + 0.05

    def test_closing_near_an_object_attaches_it(self):
        # Act
        state = _grasped_state()

        # Assert
        assert state.proprio.attached_object == "apple"
        assert state.proprio.gripper == pytest.approx(0.0)
        assert state.scene.object("apple").support == HELD
        assert state.carry == CarryOffset(0.0, 0.0, 0.0, 0.0)

    def test_carried_object_follows_the_fingertip(self):
        # Arrange
        state = _grasped_state()
        arm = state.arm
        start_tip = np.asarray(state.tip)
        start_pos = np.asarray(state.scene.object("apple").position)
        q_up, err = arm.solve_ik(OVER_TABLE, start_tip + np.array([0.0, 0.0, 0.08]), iterations=200)
        assert err < 1e-3

        # Act
        state = _drive_to(state, q_up)

        # Assert
        pos = np.asarray(state.scene.object("apple").position)
        assert pos[2] - start_pos[2] == pytest.approx(0.08, abs=2e-3)
        np.testing.assert_allclose(pos - np.asarray(state.tip), start_pos - start_tip, atol=1e-9)
        assert state.proprio.attached_object == "apple"

    def test_opening_drops_the_object_onto_the_table(self):
        # Arrange
        state = _grasped_state()

        # Act
        for _ in range(4):
            state = step(state, np.zeros(2), _body(gripper=0.25))

        # Assert
        apple = state.scene.object("apple")
        assert state.proprio.attached_object is None
        assert state.carry is None
        assert apple.support == "table"
        assert apple.position[2] == pytest.approx(TABLE.height + apple.half_extents[2])

    def test_open_gripper_never_grasps(self):
        tip = ArmModel().forward_kinematics(OVER_TABLE).position
        task = make_task(make_scene([make_object("apple", position=tip)]), bindings={"object": "apple"})
        state = _with_arm(reset(task), OVER_TABLE, gripper=1.0)

        nxt = step(state, np.zeros(2), _zero_body())

        assert nxt.proprio.attached_object is None

    def test_far_object_is_not_grasped(self):
        tip = np.asarray(ArmModel().forward_kinematics(OVER_TABLE).position)
        apple = make_object("apple", position=tuple(tip + np.array([0.0, 0.1, 0.0])))
        task = make_task(make_scene([apple]), bindings={"object": "apple"})
        state = _with_arm(reset(task), OVER_TABLE, gripper=0.25)

        nxt = step(state, np.zeros(2), _body(gripper=-0.25))

        assert nxt.proprio.attached_object is None


class TestHandleDrive:
    """A closed gripper on a handle drives the joint along the fingertip motion."""

    def _drawer_at_fingertip(self):
        tip = np.asarray(ArmModel().forward_kinematics(OVER_TABLE).position)
        # Handle sits 2 cm in front of the panel along the pull axis (-x).
        slot = ContainerSlot("drawer", tuple(float(v) for v in tip + np.array([0.02, 0.0, 0.0])))
        drawer = Container.mounted("drawer9", slot, "white")
        task = make_task(make_scene(containers=[drawer]), family="open_drawer", bindings={"container": "drawer9"})
        return _with_arm(reset(task), OVER_TABLE, gripper=0.0)

    def _pull(self, arm, dx):
        dq = np.linalg.pinv(arm.jacobian(OVER_TABLE)) @ np.array([dx, 0.0, 0.0])
        return np.clip(dq, -0.06, 0.06)

    def test_handle_sits_on_the_fingertip(self):
        state = self._drawer_at_fingertip()

        np.testing.assert_allclose(state.scene.container("drawer9").handle_point(), state.tip, atol=1e-9)

    def test_pulling_opens_by_the_projected_motion(self):
        # Arrange
        state = self._drawer_at_fingertip()
        arm = state.arm
        dq = self._pull(arm, -0.01)
        tip_old = np.asarray(arm.forward_kinematics(OVER_TABLE).position)
        tip_new = np.asarray(arm.forward_kinematics(arm.clamp(OVER_TABLE + dq)).position)
        expected = float(np.clip((tip_new - tip_old) @ np.array([-1.0, 0.0, 0.0]), 0.0, 0.30))
        assert expected > 0.003

        # Act
        nxt = step(state, np.zeros(2), _body(dq, 0.0))

        # Assert
        assert nxt.engaged_container == "drawer9"
        assert nxt.scene.container("drawer9").joint.value == pytest.approx(expected)

    def test_pushing_a_closed_drawer_keeps_it_closed(self):
        state = self._drawer_at_fingertip()
        dq = self._pull(state.arm, 0.01)

        nxt = step(state, np.zeros(2), _body(dq, 0.0))

        assert nxt.scene.container("drawer9").joint.value == 0.0

    def test_open_gripper_does_not_engage(self):
        state = self._drawer_at_fingertip()
        state.proprio = dataclasses.replace(state.proprio, gripper=1.0)
        dq = self._pull(state.arm, -0.01)

        nxt = step(state, np.zeros(2), _body(dq, 0.0))

        assert nxt.engaged_container is None
        assert nxt.scene.container("drawer9").joint.value == 0.0


class TestPouring:
    """Tilting a held container past 60 degrees moves one unit per step."""

    def _pouring_state(self, bowl_offset=(0.0, 0.0)):
        q = np.array([0.0, 0.8, -1.4, -0.8])  # wrist pitch -1.4 rad
        arm = ArmModel()
        tip = arm.forward_kinematics(q).position
        cup = make_object("cup", category="cup", position=tip, color="white", capacity=10, liquid_units=5)
        bowl = make_object(
            "bowl",
            category="bowl",
            position=(tip[0] + bowl_offset[0], tip[1] + bowl_offset[1], 0.75),
            color="blue",
            capacity=12,
        )
        bowl = dataclasses.replace(bowl, position=(bowl.position[0], bowl.position[1], 0.72 + bowl.half_extents[2]))
        task = make_task(
            make_scene([cup, bowl]),
            family="pour",
            bindings={"holder": "cup", "receptacle": "bowl"},
            goals={"source_volume": 5, "receptacle_start": 0},
        )
        state = reset(task)
        state.proprio = dataclasses.replace(
            state.proprio, arm_joints=tuple(float(v) for v in q), gripper=0.0, attached_object="cup"
        )
        state.carry = CarryOffset(0.0, 0.0, 0.0, 0.0)
        return state

    def test_aligned_pour_transfers_a_unit(self):
        # Act
        nxt = step(self._pouring_state(), np.zeros(2), _zero_body())

        # Assert
        assert nxt.scene.object("cup").liquid_units == 4
        assert nxt.scene.object("bowl").liquid_units == 1
        assert nxt.spilled == 0

    def test_misaligned_pour_spills(self):
        nxt = step(self._pouring_state(bowl_offset=(0.0, 0.12)), np.zeros(2), _zero_body())

        assert nxt.scene.object("cup").liquid_units == 4
        assert nxt.scene.object("bowl").liquid_units == 0
        assert nxt.spilled == 1
