"""Scenes: loose objects on support surfaces plus articulated containers."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Iterable, Optional

import numpy as np

from ..config import ROOM_TYPES
from ..errors import GenerationError
from . import catalog, layout
from .articulation import Container
from .layout import Surface, Vec3

logger = logging.getLogger(__name__)

PLACEMENT_MARGIN = 0.005
FLOOR = "floor"


@dataclass(frozen=True)
class ObjectInstance:
    """A rigid object resting on (or carried above) a support.

    ``position`` is the bounding-box centre; ``size`` the bounding-sphere
    radius. Box half extents follow the category aspect, scaled so their
    norm equals ``size``.
    """

    id: str
    category: str
    color: str
    size: float
    position: Vec3
    yaw: float = 0.0
    graspable: bool = True
    liquid_units: int = 0
    capacity: int = 0
    support: str = "table"

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ValueError(f"Object {self.id}: size must be positive")
        if not 0 <= self.liquid_units <= self.capacity:
            raise ValueError(
                f"Object {self.id}: liquid_units {self.liquid_units} exceeds capacity {self.capacity}"
            )

    @property
    def shape(self) -> str:
        return catalog.category(self.category).shape

    @property
    def half_extents(self) -> Vec3:
        spec = catalog.category(self.category)
        if spec.shape == "sphere":
            return (self.size, self.size, self.size)
        aspect = np.asarray(spec.aspect, dtype=np.float64)
        half = aspect * (self.size / float(np.linalg.norm(aspect)))
        return tuple(float(h) for h in half)

    @property
    def grasp_point(self) -> Vec3:
        return self.position

    @property
    def lip_point(self) -> Vec3:
        """Top centre, where poured liquid enters."""
        x, y, z = self.position
        return (x, y, z + self.half_extents[2])

    def footprint(self) -> tuple[float, float]:
        """Axis-aligned half extents of the yawed footprint."""
        hx, hy, _ = self.half_extents
        if self.shape == "sphere":
            return hx, hy
        c, s = abs(math.cos(self.yaw)), abs(math.sin(self.yaw))
        return c * hx + s * hy, s * hx + c * hy

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        fx, fy = self.footprint()
        hz = self.half_extents[2]
        center = np.asarray(self.position, dtype=np.float64)
        half = np.array([fx, fy, hz])
        return center - half, center + half

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "category": self.category,
            "color": self.color,
            "size": self.size,
            "position": list(self.position),
            "yaw": self.yaw,
            "graspable": self.graspable,
            "liquid_units": self.liquid_units,
            "capacity": self.capacity,
            "support": self.support,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ObjectInstance":
        return cls(
            id=data["id"],
            category=data["category"],
            color=data["color"],
            size=float(data["size"]),
            position=tuple(data["position"]),
            yaw=float(data["yaw"]),
            graspable=bool(data["graspable"]),
            liquid_units=int(data["liquid_units"]),
            capacity=int(data["capacity"]),
            support=data["support"],
        )


def aabb_overlap_volume(a: tuple[np.ndarray, np.ndarray], b: tuple[np.ndarray, np.ndarray], margin: float = 0.0) -> float:
    lo = np.maximum(a[0] - margin, b[0] - margin)
    hi = np.minimum(a[1] + margin, b[1] + margin)
    extent = np.clip(hi - lo, 0.0, None)
    return float(np.prod(extent))


@dataclass(frozen=True)
class Scene:
    room_type: str
    surfaces: tuple[Surface, ...]
    objects: tuple[ObjectInstance, ...]
    containers: tuple[Container, ...] = ()
    head_pivot: Vec3 = (0.0, 0.0, 1.25)
    rng_seed: int = 0

    # Lookup helpers

    def object(self, object_id: str) -> ObjectInstance:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(f"No object with id {object_id}")

    def container(self, container_id: str) -> Container:
        for c in self.containers:
            if c.id == container_id:
                return c
        raise KeyError(f"No container with id {container_id}")

    def has(self, entity_id: str) -> bool:
        return any(o.id == entity_id for o in self.objects) or any(
            c.id == entity_id for c in self.containers
        )

    def container_of(self, object_id: str) -> Optional[Container]:
        for c in self.containers:
            if object_id in c.interior_objects:
                return c
        return None

    def surface(self, name: str) -> Surface:
        for s in self.all_supports():
            if s.name == name:
                return s
        raise KeyError(f"No support named {name}")

    def all_supports(self) -> list[Surface]:
        return list(self.surfaces) + [c.interior_surface() for c in self.containers]

    def is_hidden(self, object_id: str) -> bool:
        """True while the object sits in a container below the visibility gate."""
        container = self.container_of(object_id)
        return container is not None and not container.interior_visible

    def anchor_point(self, entity_id: str) -> Vec3:
        """Grasp point of an object or handle point of a container."""
        for c in self.containers:
            if c.id == entity_id:
                return c.handle_point()
        return self.object(entity_id).grasp_point

    # Functional updates

    def with_object(self, obj: ObjectInstance) -> "Scene":
        objects = tuple(obj if o.id == obj.id else o for o in self.objects)
        return replace(self, objects=objects)

    def with_container(self, container: Container) -> "Scene":
        containers = tuple(container if c.id == container.id else c for c in self.containers)
        return replace(self, containers=containers)

    def without(self, object_id: str) -> "Scene":
        objects = tuple(o for o in self.objects if o.id != object_id)
        containers = tuple(
            replace(c, interior_objects=tuple(i for i in c.interior_objects if i != object_id))
            for c in self.containers
        )
        return replace(self, objects=objects, containers=containers)

    # Serialization

    def to_dict(self) -> dict[str, Any]:
        return {
            "room_type": self.room_type,
            "surfaces": [s.to_dict() for s in self.surfaces],
            "objects": [o.to_dict() for o in self.objects],
            "containers": [c.to_dict() for c in self.containers],
            "head_pivot": list(self.head_pivot),
            "rng_seed": self.rng_seed,
        }

    def to_canonical_text(self) -> str:
        """Stable JSON document with sorted keys."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scene":
        return cls(
            room_type=data["room_type"],
            surfaces=tuple(Surface.from_dict(s) for s in data["surfaces"]),
            objects=tuple(ObjectInstance.from_dict(o) for o in data["objects"]),
            containers=tuple(Container.from_dict(c) for c in data["containers"]),
            head_pivot=tuple(data["head_pivot"]),
            rng_seed=int(data["rng_seed"]),
        )


def drive_container(scene: Scene, container_id: str, delta: float) -> Scene:
    """Step a container joint; drawer contents travel with the drawer."""
    container = scene.container(container_id)
    old_value = container.joint.value
    new_value = min(max(old_value + float(delta), 0.0), container.joint.limit)
    moved = container.with_value(new_value)
    scene = scene.with_container(moved)
    if container.kind == "drawer" and new_value != old_value:
        shift = (new_value - old_value) * np.asarray(container.joint.axis)
        for object_id in container.interior_objects:
            obj = scene.object(object_id)
            if obj.support != moved.interior_surface().name:
                continue
            position = tuple(float(p) for p in np.asarray(obj.position) + shift)
            scene = scene.with_object(replace(obj, position=position))
    return scene


def support_below(
    scene: Scene, x: float, y: float, z: float
) -> tuple[str, float]:
    """Highest support whose footprint contains ``(x, y)`` at or below ``z``."""
    best_name, best_height = FLOOR, 0.0
    for surface in scene.all_supports():
        if surface.contains(x, y) and surface.height <= z + 1e-9 and surface.height > best_height:
            best_name, best_height = surface.name, surface.height
    return best_name, best_height


def _sample_position(
    rng: np.random.Generator, surface: Surface, footprint: tuple[float, float]
) -> Optional[tuple[float, float]]:
    room_x = surface.half_extents[0] - footprint[0]
    room_y = surface.half_extents[1] - footprint[1]
    if room_x < 0 or room_y < 0:
        return None
    x = surface.center[0] + rng.uniform(-room_x, room_x)
    y = surface.center[1] + rng.uniform(-room_y, room_y)
    return x, y


def place_object(
    rng: np.random.Generator,
    template: ObjectInstance,
    surface: Surface,
    blockers: Iterable[tuple[str, tuple[np.ndarray, np.ndarray]]],
    max_attempts: int,
) -> ObjectInstance:
    """Rejection-sample a rest pose for ``template`` on ``surface``.

    Raises:
        GenerationError: naming the object and its last collider.
    """
    blockers = list(blockers)
    last_collider: Optional[str] = None
    for _ in range(max_attempts):
        yaw = float(rng.uniform(-math.pi, math.pi))
        candidate = replace(template, yaw=yaw)
        xy = _sample_position(rng, surface, candidate.footprint())
        if xy is None:
            last_collider = surface.name
            continue
        z = surface.height + candidate.half_extents[2]
        candidate = replace(candidate, position=(float(xy[0]), float(xy[1]), float(z)), support=surface.name)
        box = candidate.aabb()
        collider = next(
            (name for name, other in blockers if aabb_overlap_volume(box, other, PLACEMENT_MARGIN) > 0.0),
            None,
        )
        if collider is None:
            return candidate
        last_collider = collider
    raise GenerationError(
        f"Could not place {template.id} ({template.category}) on {surface.name} "
        f"after {max_attempts} attempts; last collision with {last_collider}",
        object_id=template.id,
    )


def _fixture_blockers(containers: Iterable[Container]) -> list[tuple[str, tuple[np.ndarray, np.ndarray]]]:
    blockers = []
    for c in containers:
        center, half, yaw = c.front_box()
        cs, sn = abs(math.cos(yaw)), abs(math.sin(yaw))
        extent = np.array([cs * half[0] + sn * half[1], sn * half[0] + cs * half[1], half[2]])
        blockers.append((c.id, (np.asarray(center) - extent, np.asarray(center) + extent)))
    return blockers


def sample_scene(config, seed: int) -> Scene:
    """Sample a scene from a ``SceneConfig``; deterministic for fixed seed.

    Room type follows ``config.room_probs``; fixtures are jittered and
    shifted; loose objects are rest-placed with rejection against overlap.
    """
    rng = np.random.default_rng(seed)
    room_type = str(rng.choice(ROOM_TYPES, p=[config.room_probs[r] for r in ROOM_TYPES]))

    shift_x, shift_y = config.layout_shift
    surfaces = []
    for base in layout.BASE_SURFACES:
        jx, jy = rng.uniform(-config.layout_jitter, config.layout_jitter, size=2)
        surfaces.append(base.shifted(shift_x + jx, shift_y + jy))

    lo, hi = config.container_count
    n_containers = int(rng.integers(lo, hi + 1))
    slot_order = rng.permutation(len(layout.CONTAINER_SLOTS))[: min(n_containers, len(layout.CONTAINER_SLOTS))]
    containers: list[Container] = []
    for slot_index in sorted(int(i) for i in slot_order):
        slot = layout.CONTAINER_SLOTS[slot_index]
        shifted = layout.ContainerSlot(
            slot.kind,
            (slot.position[0] + shift_x, slot.position[1] + shift_y, slot.position[2]),
            slot.yaw,
            slot.swing,
        )
        color = str(rng.choice(catalog.COLORS))
        containers.append(Container.mounted(f"{slot.kind}{slot_index}", shifted, color))

    excluded = tuple(config.excluded_categories)
    weights = catalog.room_weights(room_type, excluded)
    names = sorted(weights)
    probs = np.array([weights[n] for n in names])
    probs = probs / probs.sum()
    required = [c for c in config.required_categories if c not in excluded]

    lo, hi = config.object_count
    n_objects = int(rng.integers(lo, hi + 1))
    categories = [str(rng.choice(names, p=probs)) for _ in range(n_objects)]
    if required and n_objects > 0:
        categories[0] = str(rng.choice(required))

    surface_weights = np.array([layout.SURFACE_WEIGHTS[s.name] * s.area for s in surfaces])
    surface_weights = surface_weights / surface_weights.sum()

    blockers = _fixture_blockers(containers)
    objects: list[ObjectInstance] = []
    interiors: dict[str, list[str]] = {c.id: [] for c in containers}
    for i, name in enumerate(categories):
        spec = catalog.category(name)
        template = ObjectInstance(
            id=f"obj{i}",
            category=name,
            color=str(rng.choice(catalog.COLORS)),
            size=float(rng.uniform(*spec.size_range)),
            position=(0.0, 0.0, 0.0),
            graspable=spec.graspable,
            liquid_units=spec.capacity if name in catalog.HOLDER_CATEGORIES else 0,
            capacity=spec.capacity,
        )
        empty = [c for c in containers if not interiors[c.id]]
        use_interior = bool(empty) and rng.uniform() < config.interior_probability and template.half_extents[2] < 0.05 and template.size <= 0.06
        if use_interior:
            container = empty[0]
            support = container.interior_surface()
        else:
            support = surfaces[int(rng.choice(len(surfaces), p=surface_weights))]
        placed = place_object(rng, template, support, blockers, config.max_placement_attempts)
        objects.append(placed)
        blockers.append((placed.id, placed.aabb()))
        if use_interior:
            interiors[container.id].append(placed.id)

    containers = [replace(c, interior_objects=tuple(interiors[c.id])) for c in containers]
    scene = Scene(
        room_type=room_type,
        surfaces=tuple(surfaces),
        objects=tuple(objects),
        containers=tuple(containers),
        head_pivot=tuple(config.head_pivot),
        rng_seed=int(seed),
    )
    logger.debug(
        f"Sampled scene seed={seed} room={room_type} objects={len(objects)} containers={len(containers)}"
    )
    return scene
