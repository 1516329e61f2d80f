"""Articulated containers: prismatic drawers and revolute cabinet doors."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Literal

import numpy as np

from . import layout
from .layout import Surface, Vec3

JointKind = Literal["prismatic", "revolute"]
ContainerKind = Literal["drawer", "cabinet"]

# Interior objects are drawn only above this openness fraction.
VISIBILITY_GATE = 0.15


@dataclass(frozen=True)
class ArticulatedJoint:
    kind: JointKind
    value: float
    limit: float
    axis: Vec3

    def __post_init__(self) -> None:
        if self.limit <= 0:
            raise ValueError(f"Joint limit must be positive, got {self.limit}")
        if not 0.0 <= self.value <= self.limit:
            raise ValueError(
                f"Joint value {self.value} outside [0, {self.limit}]"
            )

    @property
    def openness(self) -> float:
        return self.value / self.limit

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "value": self.value,
            "limit": self.limit,
            "axis": list(self.axis),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ArticulatedJoint":
        return cls(data["kind"], float(data["value"]), float(data["limit"]), tuple(data["axis"]))


def step_joint(joint: ArticulatedJoint, delta: float) -> ArticulatedJoint:
    """Move a joint by ``delta`` and clamp to ``[0, limit]``."""
    value = min(max(joint.value + float(delta), 0.0), joint.limit)
    return replace(joint, value=value)


@dataclass(frozen=True)
class Container:
    """A drawer or cabinet mounted at a fixed slot.

    ``body_position`` is the closed front-panel centre of a drawer or the
    hinge point of a cabinet door; ``body_yaw`` and ``swing`` only matter for
    cabinets (closed door direction and opening sense).
    """

    id: str
    kind: ContainerKind
    joint: ArticulatedJoint
    body_position: Vec3
    body_yaw: float = 0.0
    swing: int = 1
    color: str = "white"
    interior_objects: tuple[str, ...] = ()

    @classmethod
    def mounted(cls, id: str, slot: layout.ContainerSlot, color: str, value: float = 0.0) -> "Container":
        if slot.kind == "drawer":
            joint = ArticulatedJoint("prismatic", value, layout.DRAWER_LIMIT, (-1.0, 0.0, 0.0))
        else:
            joint = ArticulatedJoint("revolute", value, layout.CABINET_LIMIT, (0.0, 0.0, 1.0))
        return cls(id, slot.kind, joint, tuple(slot.position), slot.yaw, slot.swing, color)

    @property
    def openness(self) -> float:
        return self.joint.openness

    @property
    def interior_visible(self) -> bool:
        return self.openness > VISIBILITY_GATE

    def with_value(self, value: float) -> "Container":
        return replace(self, joint=replace(self.joint, value=value))

    # Cabinet door frame
    def _door_direction(self, theta: float) -> np.ndarray:
        phi = self.body_yaw + self.swing * theta
        return np.array([math.cos(phi), math.sin(phi), 0.0])

    def _door_normal(self, theta: float) -> np.ndarray:
        d = self._door_direction(theta)
        if self.swing > 0:
            return np.array([-d[1], d[0], 0.0])
        return np.array([d[1], -d[0], 0.0])

    def _drawer_front(self, value: float) -> np.ndarray:
        return np.asarray(self.body_position) + value * np.asarray(self.joint.axis)

    def handle_point(self, value: float | None = None) -> Vec3:
        """Handle position for a joint value (default: the current one)."""
        value = self.joint.value if value is None else value
        if self.kind == "drawer":
            point = self._drawer_front(value) + 0.02 * np.asarray(self.joint.axis)
        else:
            w = layout.CABINET_DOOR_WIDTH
            point = (
                np.asarray(self.body_position)
                + (w - layout.HANDLE_OFFSET) * self._door_direction(value)
                + layout.HANDLE_OFFSET * self._door_normal(value)
            )
        return tuple(float(c) for c in point)

    def handle_tangent(self, value: float | None = None) -> np.ndarray:
        """d(handle)/d(value)."""
        value = self.joint.value if value is None else value
        if self.kind == "drawer":
            return np.asarray(self.joint.axis, dtype=np.float64)
        w = layout.CABINET_DOOR_WIDTH
        d = self._door_direction(value)
        n = self._door_normal(value)
        rot_d = np.array([-d[1], d[0], 0.0])
        rot_n = np.array([-n[1], n[0], 0.0])
        return self.swing * ((w - layout.HANDLE_OFFSET) * rot_d + layout.HANDLE_OFFSET * rot_n)

    def joint_delta_for(self, displacement: np.ndarray) -> float:
        """Joint change produced by moving the handle by ``displacement``.

        Prismatic: projection on the axis. Revolute: projection on the arc
        tangent divided by the handle radius.
        """
        tangent = self.handle_tangent()
        norm_sq = float(tangent @ tangent)
        return float(np.asarray(displacement, dtype=np.float64) @ tangent) / norm_sq

    def front_box(self) -> tuple[Vec3, Vec3, float]:
        """Rendered front panel / door as ``(center, half_extents, yaw)``."""
        if self.kind == "drawer":
            center = self._drawer_front(self.joint.value)
            return tuple(float(c) for c in center), layout.DRAWER_FRONT_HALF, 0.0
        w = layout.CABINET_DOOR_WIDTH
        d = self._door_direction(self.joint.value)
        center = np.asarray(self.body_position) + 0.5 * w * d
        half = (0.5 * w, 0.01, layout.CABINET_DOOR_HALF_HEIGHT)
        return tuple(float(c) for c in center), half, math.atan2(d[1], d[0])

    def interior_surface(self) -> Surface:
        """Support slab inside the container; a drawer's moves with it."""
        if self.kind == "drawer":
            front = self._drawer_front(self.joint.value)
            back = -np.asarray(self.joint.axis)
            hx, hy = layout.DRAWER_INTERIOR_HALF
            center = front + back * (0.01 + hx)
            height = self.body_position[2] - layout.DRAWER_FLOOR_DROP
            return Surface(f"{self.id}/interior", (float(center[0]), float(center[1])), (hx, hy), height)
        w = layout.CABINET_DOOR_WIDTH
        hx, hy = layout.CABINET_INTERIOR_HALF
        center = (
            np.asarray(self.body_position)
            + 0.5 * w * self._door_direction(0.0)
            - (hx + 0.01) * self._door_normal(0.0)
        )
        height = self.body_position[2] - layout.CABINET_FLOOR_DROP
        return Surface(f"{self.id}/interior", (float(center[0]), float(center[1])), (hx, hy), height)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "joint": self.joint.to_dict(),
            "body_position": list(self.body_position),
            "body_yaw": self.body_yaw,
            "swing": self.swing,
            "color": self.color,
            "interior_objects": list(self.interior_objects),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Container":
        return cls(
            id=data["id"],
            kind=data["kind"],
            joint=ArticulatedJoint.from_dict(data["joint"]),
            body_position=tuple(data["body_position"]),
            body_yaw=float(data["body_yaw"]),
            swing=int(data["swing"]),
            color=data["color"],
            interior_objects=tuple(data["interior_objects"]),
        )
