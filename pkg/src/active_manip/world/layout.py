"""Fixed desk layout: support surfaces and container slots.

Every scene starts from these fixtures; ``sample_scene`` jitters and shifts
them. Surfaces are support slabs only and are never rendered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class Surface:
    """Axis-aligned horizontal support slab."""

    name: str
    center: Vec2
    half_extents: Vec2
    height: float

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return (
            abs(x - self.center[0]) <= self.half_extents[0] - margin
            and abs(y - self.center[1]) <= self.half_extents[1] - margin
        )

    @property
    def area(self) -> float:
        return 4.0 * self.half_extents[0] * self.half_extents[1]

    def shifted(self, dx: float, dy: float) -> "Surface":
        return Surface(
            self.name,
            (self.center[0] + dx, self.center[1] + dy),
            self.half_extents,
            self.height,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "center": list(self.center),
            "half_extents": list(self.half_extents),
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Surface":
        return cls(
            data["name"],
            tuple(data["center"]),
            tuple(data["half_extents"]),
            float(data["height"]),
        )


BASE_SURFACES: tuple[Surface, ...] = (
    Surface("table", (0.44, 0.0), (0.14, 0.30), 0.72),
    Surface("left_counter", (0.20, 0.75), (0.25, 0.15), 0.90),
    Surface("right_counter", (0.20, -0.75), (0.25, 0.15), 0.90),
    Surface("shelf", (0.75, 0.0), (0.08, 0.35), 1.55),
)

# Loose objects land on the table more often than elsewhere.
SURFACE_WEIGHTS = {"table": 3.0, "left_counter": 1.0, "right_counter": 1.0, "shelf": 0.6}


@dataclass(frozen=True)
class ContainerSlot:
    """Where a drawer or cabinet may be mounted.

    For a drawer ``position`` is the closed front-panel centre; for a cabinet
    it is the hinge point at door mid-height, ``yaw`` the closed door
    direction and ``swing`` the sign of the opening rotation about z.
    """

    kind: str
    position: Vec3
    yaw: float = 0.0
    swing: int = 1


CONTAINER_SLOTS: tuple[ContainerSlot, ...] = (
    ContainerSlot("drawer", (0.45, 0.15, 0.50)),
    ContainerSlot("drawer", (0.45, -0.25, 0.50)),
    ContainerSlot("cabinet", (0.30, 0.45, 1.00), yaw=-1.5707963267948966, swing=-1),
    ContainerSlot("cabinet", (0.30, -0.45, 1.00), yaw=1.5707963267948966, swing=1),
)

DRAWER_LIMIT = 0.30
DRAWER_FRONT_HALF: Vec3 = (0.01, 0.10, 0.06)
DRAWER_INTERIOR_HALF: Vec2 = (0.12, 0.085)
DRAWER_FLOOR_DROP = 0.06
CABINET_LIMIT = 1.75
CABINET_DOOR_WIDTH = 0.24
CABINET_DOOR_HALF_HEIGHT = 0.12
CABINET_INTERIOR_HALF: Vec2 = (0.10, 0.10)
CABINET_FLOOR_DROP = 0.10
HANDLE_OFFSET = 0.03
