"""Low-DoF serial arm: base yaw plus a planar shoulder/elbow/wrist chain.

Joint vector ``q = (q0, q1, q2, q3)``: q0 rotates the whole chain about the
world z-axis; q1..q3 are pitch joints in the vertical plane, positive up.
A riser of length ``l0`` lifts the shoulder above the base. With all joints
at zero the arm points straight along +x (the home pose).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .camera import CameraState

logger = logging.getLogger(__name__)

N_ARM_JOINTS = 4
D_BODY = N_ARM_JOINTS + 1


@dataclass(frozen=True)
class ProprioState:
    """Robot joint state used as policy conditioning.

    Attributes:
        arm_joints: ``(q0, q1, q2, q3)`` radians.
        gripper: 0 closed .. 1 open.
        attached_object: id of the carried object, if any.
        head: ``(pitch, yaw)`` degrees.
    """

    arm_joints: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    gripper: float = 1.0
    attached_object: Optional[str] = None
    head: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if len(self.arm_joints) != N_ARM_JOINTS:
            raise ValueError(f"Expected {N_ARM_JOINTS} arm joints, got {len(self.arm_joints)}")
        if not 0.0 <= self.gripper <= 1.0:
            raise ValueError(f"Gripper value {self.gripper} outside [0, 1]")

    def as_vector(self) -> np.ndarray:
        """Conditioning vector: joints, gripper, attached flag, head / 90."""
        return np.array(
            [
                *self.arm_joints,
                self.gripper,
                1.0 if self.attached_object else 0.0,
                self.head[0] / 90.0,
                self.head[1] / 90.0,
            ],
            dtype=np.float32,
        )


PROPRIO_DIM = 8


@dataclass(frozen=True)
class EndEffectorPose:
    position: tuple[float, float, float]
    wrist_pitch: float
    base_yaw: float


@dataclass
class ArmModel:
    base: tuple[float, float, float] = (0.0, 0.0, 0.80)
    link_lengths: tuple[float, float, float, float] = (0.05, 0.32, 0.28, 0.10)
    joint_limits: tuple[tuple[float, float], ...] = (
        (-1.6, 1.6),
        (-1.4, 1.4),
        (-2.4, 2.4),
        (-2.0, 2.0),
    )
    wrist_camera_offset: tuple[float, float, float] = (-0.10, 0.0, 0.05)
    _lower: np.ndarray = field(init=False, repr=False)
    _upper: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        limits = np.asarray(self.joint_limits, dtype=np.float64)
        self._lower = limits[:, 0]
        self._upper = limits[:, 1]

    @classmethod
    def from_config(cls, arm_config) -> "ArmModel":
        return cls(
            base=tuple(arm_config.base),
            link_lengths=tuple(arm_config.link_lengths),
            joint_limits=tuple(tuple(l) for l in arm_config.joint_limits),
            wrist_camera_offset=tuple(arm_config.wrist_camera_offset),
        )

    @property
    def shoulder(self) -> np.ndarray:
        return np.asarray(self.base) + np.array([0.0, 0.0, self.link_lengths[0]])

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths[1:]))

    def clamp(self, q) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=np.float64), self._lower, self._upper)

    def forward_kinematics(self, q) -> EndEffectorPose:
        """Fingertip position and wrist pitch for joint vector ``q``."""
        q0, q1, q2, q3 = (float(v) for v in self.clamp(q))
        _, l1, l2, l3 = self.link_lengths
        a1, a2, a3 = q1, q1 + q2, q1 + q2 + q3
        r = l1 * math.cos(a1) + l2 * math.cos(a2) + l3 * math.cos(a3)
        z = l1 * math.sin(a1) + l2 * math.sin(a2) + l3 * math.sin(a3)
        sx, sy, sz = self.shoulder
        position = (sx + r * math.cos(q0), sy + r * math.sin(q0), sz + z)
        return EndEffectorPose(position=position, wrist_pitch=a3, base_yaw=q0)

    def jacobian(self, q) -> np.ndarray:
        """Analytic 3x4 Jacobian of the fingertip position."""
        q0, q1, q2, q3 = (float(v) for v in self.clamp(q))
        _, l1, l2, l3 = self.link_lengths
        a1, a2, a3 = q1, q1 + q2, q1 + q2 + q3
        s1, s2, s3 = math.sin(a1), math.sin(a2), math.sin(a3)
        c1, c2, c3 = math.cos(a1), math.cos(a2), math.cos(a3)
        r = l1 * c1 + l2 * c2 + l3 * c3
        dr = (-(l1 * s1 + l2 * s2 + l3 * s3), -(l2 * s2 + l3 * s3), -l3 * s3)
        dz = (l1 * c1 + l2 * c2 + l3 * c3, l2 * c2 + l3 * c3, l3 * c3)
        cq, sq = math.cos(q0), math.sin(q0)
        jac = np.zeros((3, 4))
        jac[:, 0] = (-r * sq, r * cq, 0.0)
        for j in range(3):
            jac[:, j + 1] = (dr[j] * cq, dr[j] * sq, dz[j])
        return jac

    def solve_ik(
        self,
        q_init,
        target,
        iterations: int = 50,
        pitch_target: Optional[float] = None,
        pitch_weight: float = 0.1,
    ) -> tuple[np.ndarray, float]:
        """Coordinate-descent inverse kinematics.

        Each iteration sweeps the joints once, taking a clamped Gauss-Newton
        step on one joint at a time against the remaining position (and
        optional wrist-pitch) error.

        Returns:
            Joint vector and the final fingertip position error in metres.
        """
        q = self.clamp(q_init)
        target = np.asarray(target, dtype=np.float64)
        for _ in range(iterations):
            for j in range(N_ARM_JOINTS):
                pose = self.forward_kinematics(q)
                err = target - np.asarray(pose.position)
                col = self.jacobian(q)[:, j]
                num = float(col @ err)
                den = float(col @ col)
                if pitch_target is not None and j > 0:
                    num += pitch_weight * (pitch_target - pose.wrist_pitch)
                    den += pitch_weight
                if den < 1e-12:
                    continue
                q[j] = q[j] + num / (den + 1e-6)
                q = self.clamp(q)
        error = float(np.linalg.norm(target - np.asarray(self.forward_kinematics(q).position)))
        return q, error

    def wrist_camera(self, q, head: CameraState) -> CameraState:
        """Camera rigidly attached to the end-effector yaw frame."""
        pose = self.forward_kinematics(q)
        c, s = math.cos(pose.base_yaw), math.sin(pose.base_yaw)
        ox, oy, oz = self.wrist_camera_offset
        pivot = (
            pose.position[0] + c * ox - s * oy,
            pose.position[1] + s * ox + c * oy,
            pose.position[2] + oz,
        )
        return replace(
            head,
            pitch=math.degrees(pose.wrist_pitch),
            yaw=math.degrees(pose.base_yaw),
            limits=(-180.0, 180.0, -180.0, 180.0),
            pivot=pivot,
        )
