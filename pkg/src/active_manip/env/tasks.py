"""Task families, their bindings and goals, and seeded task sampling.

``sample_task`` draws scenes until the family's bindings are satisfiable
and the requested visibility mode can be constructed; the resulting
``TaskSpec`` is everything ``reset`` needs to start an episode.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from ..config import VISIBILITY_MODES, PipelineConfig
from ..errors import ConfigError, DegenerateGeometryError, GenerationError, RejectionError
from ..viewgen import templates as bank
from ..viewgen.dataset import generation_scene_config
from ..viewgen.instruct import (
    BoundTask,
    Instruction,
    describe,
    describe_container,
    instantiate_template,
    loose_objects,
    surface_cue,
)
from ..world import catalog
from ..world.arm import ArmModel
from ..world.camera import CameraState
from ..world.scene import ObjectInstance, Scene, aabb_overlap_volume, drive_container, sample_scene
from . import visibility
from .reach import liftable, reachable

logger = logging.getLogger(__name__)

TASK_FAMILIES: tuple[str, ...] = (
    "pick",
    "reorient",
    "open_drawer",
    "close_drawer",
    "open_cabinet",
    "close_cabinet",
    "pick_and_place",
    "open_close_drawer",
    "open_close_cabinet",
    "fetch_from_drawer",
    "fetch_from_cabinet",
    "pour",
)

# Ordered preconditions; the last phase is the one that must be held.
FAMILY_PHASES: dict[str, tuple[str, ...]] = {
    "pick": ("pick",),
    "reorient": ("orient",),
    "open_drawer": ("open",),
    "close_drawer": ("close",),
    "open_cabinet": ("open",),
    "close_cabinet": ("close",),
    "pick_and_place": ("pick", "place"),
    "open_close_drawer": ("open", "close"),
    "open_close_cabinet": ("open", "close"),
    "fetch_from_drawer": ("open", "pick", "place", "close"),
    "fetch_from_cabinet": ("open", "pick", "place", "close"),
    "pour": ("pour",),
}

HORIZON_CLASS: dict[str, str] = {
    "pick_and_place": "short",
    "open_close_drawer": "short",
    "open_close_cabinet": "short",
    "fetch_from_drawer": "long",
    "fetch_from_cabinet": "long",
}

CONTAINER_KIND: dict[str, str] = {
    "open_drawer": "drawer",
    "close_drawer": "drawer",
    "open_close_drawer": "drawer",
    "fetch_from_drawer": "drawer",
    "open_cabinet": "cabinet",
    "close_cabinet": "cabinet",
    "open_close_cabinet": "cabinet",
    "fetch_from_cabinet": "cabinet",
}

# Families whose first look target is a loose object; only these can be
# hidden behind a placed occluder.
LOOSE_TARGET_FAMILIES: tuple[str, ...] = ("pick", "reorient", "pick_and_place", "pour")

FAMILY_ACTION: dict[str, str] = {
    "pick": "pick",
    "reorient": "reorient",
    "open_drawer": "open",
    "open_cabinet": "open",
    "close_drawer": "close",
    "close_cabinet": "close",
    "open_close_drawer": "open",
    "open_close_cabinet": "open",
    "pick_and_place": "place",
    "pour": "pour",
}

TASK_SEED_STRIDE = 1000
PLACE_MIN_DISTANCE = 0.10
POUR_PITCH = -1.25
POUR_HEIGHT = 0.04
REORIENT_ANGLES = (math.radians(45.0), math.radians(30.0))
DRAWER_OPEN_FRACTION = 0.95
CABINET_OPEN_ANGLE = math.radians(88.0)


@dataclass(frozen=True)
class TaskSpec:
    """One episode's task: scene, bindings, goals and starting view.

    Attributes:
        family: One of ``TASK_FAMILIES``.
        visibility: One of ``VISIBILITY_MODES``.
        seed: Seed the task was sampled with.
        scene: Starting scene, occluder included.
        camera: Starting head pose satisfying the visibility mode.
        anchor_id: Entity the head must find first.
        bindings: Role name to entity id (``object``, ``container``,
            ``holder``, ``receptacle``, ``occluder``).
        goals: Family goal parameters (target pose, reference heights,
            liquid volume, occluder destination).
        phases: Ordered preconditions; success needs all of them.
        hold_duration: Steps the final goal state must persist.
        horizon: Step budget of the episode.
        instruction: Tokenized instruction given to the policy.
    """

    family: str
    visibility: str
    seed: int
    scene: Scene
    camera: CameraState
    anchor_id: str
    bindings: dict[str, str]
    goals: dict[str, Any]
    phases: tuple[str, ...]
    hold_duration: int
    horizon: int
    instruction: Instruction

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "visibility": self.visibility,
            "seed": self.seed,
            "scene_seed": self.scene.rng_seed,
            "anchor_id": self.anchor_id,
            "bindings": dict(self.bindings),
            "goals": {k: list(v) if isinstance(v, tuple) else v for k, v in self.goals.items()},
            "phases": list(self.phases),
            "hold_duration": self.hold_duration,
            "horizon": self.horizon,
            "initial_camera": [self.camera.pitch, self.camera.yaw],
            "instruction": self.instruction.to_dict(),
        }


@dataclass
class _Binding:
    scene: Scene
    anchor_id: str
    bindings: dict[str, str]
    goals: dict[str, Any] = field(default_factory=dict)


def visibility_modes(family: str) -> tuple[str, ...]:
    """Visibility modes a family supports."""
    if family in LOOSE_TARGET_FAMILIES:
        return VISIBILITY_MODES
    return tuple(m for m in VISIBILITY_MODES if m != "occluded_physical")


def horizon_for(family: str, env_config) -> int:
    kind = HORIZON_CLASS.get(family, "atomic")
    return {
        "atomic": env_config.horizon_atomic,
        "short": env_config.horizon_short,
        "long": env_config.horizon_long,
    }[kind]


def open_goal(container) -> float:
    """Joint value the scripted expert drives a container to when opening."""
    if container.kind == "drawer":
        return DRAWER_OPEN_FRACTION * container.joint.limit
    return min(CABINET_OPEN_ANGLE, container.joint.limit)


def task_scene_config(family: str, config: PipelineConfig):
    """Scene settings that make the family's bindings likely."""
    scene_config = generation_scene_config(config)
    if family in CONTAINER_KIND:
        lo, hi = scene_config.container_count
        scene_config = replace(scene_config, container_count=(max(2, lo), max(4, hi)))
    if family == "pour":
        excluded = set(scene_config.excluded_categories)
        required = tuple(c for c in catalog.RECEPTACLE_CATEGORIES if c not in excluded)
        scene_config = replace(scene_config, required_categories=required)
    return scene_config


def _unique(objects: list[ObjectInstance]) -> list[ObjectInstance]:
    counts = Counter((o.color, o.category) for o in objects)
    unique = [o for o in objects if counts[(o.color, o.category)] == 1]
    return unique or objects


def _reject(family: str, message: str) -> RejectionError:
    return RejectionError(f"{family}: {message}")


def _support_height(scene: Scene, obj: ObjectInstance) -> float:
    return scene.surface(obj.support).height


def _reachable_objects(scene: Scene, arm: ArmModel, family: str) -> list[ObjectInstance]:
    candidates = [
        o for o in loose_objects(scene)
        if liftable(arm, o.grasp_point)
    ]
    if not candidates:
        raise _reject(family, "no reachable loose object")
    return _unique(candidates)


def _pick_one(rng: np.random.Generator, items):
    return items[int(rng.integers(len(items)))]


def _free_at(scene: Scene, probe: ObjectInstance, ignore: tuple[str, ...]) -> bool:
    box = probe.aabb()
    return all(
        aabb_overlap_volume(box, other.aabb(), 0.01) == 0.0
        for other in scene.objects
        if other.id not in ignore
    )


def sample_place_target(
    scene: Scene, obj: ObjectInstance, arm: ArmModel, rng: np.random.Generator, attempts: int = 64
) -> Optional[tuple[tuple[float, float, float], str]]:
    """A free, reachable rest pose for ``obj`` at least 10 cm from where it is."""
    surfaces = list(scene.surfaces)
    hz = obj.half_extents[2]
    for _ in range(attempts):
        surface = _pick_one(rng, surfaces)
        fx, fy = obj.footprint()
        room_x = surface.half_extents[0] - fx
        room_y = surface.half_extents[1] - fy
        if room_x <= 0 or room_y <= 0:
            continue
        x = surface.center[0] + rng.uniform(-room_x, room_x)
        y = surface.center[1] + rng.uniform(-room_y, room_y)
        if math.hypot(x - obj.position[0], y - obj.position[1]) < PLACE_MIN_DISTANCE:
            continue
        center = (float(x), float(y), float(surface.height + hz))
        probe = replace(obj, position=center, support=surface.name)
        if not _free_at(scene, probe, (obj.id,)):
            continue
        if liftable(arm, center):
            return center, surface.name
    return None


def _bind_pick(family, scene, rng, arm) -> _Binding:
    obj = _pick_one(rng, _reachable_objects(scene, arm, family))
    return _Binding(scene, obj.id, {"object": obj.id}, {"support_height": _support_height(scene, obj)})


def _bind_reorient(family, scene, rng, arm) -> _Binding:
    candidates = [o for o in _reachable_objects(scene, arm, family) if o.shape == "box"]
    rng.shuffle(candidates)
    bx, by, _ = arm.base
    for obj in candidates:
        support = scene.surface(obj.support)
        x, y, z = obj.position
        radius = math.hypot(x - bx, y - by)
        bearing = math.atan2(y - by, x - bx)
        signs = (1.0, -1.0) if rng.uniform() < 0.5 else (-1.0, 1.0)
        for magnitude in REORIENT_ANGLES:
            for sign in signs:
                delta = sign * magnitude
                low, high = arm.joint_limits[0]
                if not low < bearing + delta < high:
                    continue
                rx = bx + radius * math.cos(bearing + delta)
                ry = by + radius * math.sin(bearing + delta)
                if not support.contains(rx, ry, margin=obj.size):
                    continue
                if not liftable(arm, (rx, ry, z)):
                    continue
                target_yaw = math.remainder(obj.yaw + delta, 2.0 * math.pi)
                return _Binding(
                    scene,
                    obj.id,
                    {"object": obj.id},
                    {
                        "support_height": support.height,
                        "rotation": delta,
                        "target_yaw": target_yaw,
                    },
                )
    raise _reject(family, "no box-shaped object with room to turn")


def _bind_place(family, scene, rng, arm) -> _Binding:
    for obj in _reachable_objects(scene, arm, family):
        target = sample_place_target(scene, obj, arm, rng)
        if target is None:
            continue
        center, surface = target
        return _Binding(
            scene,
            obj.id,
            {"object": obj.id},
            {
                "support_height": _support_height(scene, obj),
                "target_position": center,
                "target_support": surface,
            },
        )
    raise _reject(family, "no reachable destination")


def _containers(family: str, scene: Scene, arm: ArmModel) -> list:
    kind = CONTAINER_KIND[family]
    options = [
        c for c in scene.containers
        if c.kind == kind
        and reachable(arm, c.handle_point(0.0))
        and reachable(arm, c.handle_point(open_goal(c)))
    ]
    if not options:
        raise _reject(family, f"no reachable {kind}")
    return options


def _bind_container(family, scene, rng, arm) -> _Binding:
    container = _pick_one(rng, _containers(family, scene, arm))
    goals: dict[str, Any] = {"open_value": open_goal(container)}
    if family.startswith("close"):
        value = float(container.joint.limit * rng.uniform(0.6, 1.0))
        scene = drive_container(scene, container.id, value - container.joint.value)
        if not reachable(arm, scene.container(container.id).handle_point()):
            raise _reject(family, f"{container.id} handle out of reach when open")
    return _Binding(scene, container.id, {"container": container.id}, goals)


def _bind_fetch(family, scene, rng, arm) -> _Binding:
    options = [c for c in _containers(family, scene, arm) if c.interior_objects]
    rng.shuffle(options)
    for container in options:
        obj = scene.object(container.interior_objects[0])
        if not obj.graspable:
            continue
        opened = drive_container(scene, container.id, open_goal(container))
        inside = opened.object(obj.id)
        if not liftable(arm, inside.grasp_point):
            continue
        target = sample_place_target(scene, obj, arm, rng)
        if target is None:
            continue
        center, surface = target
        return _Binding(
            scene,
            container.id,
            {"container": container.id, "object": obj.id},
            {
                "open_value": open_goal(container),
                "support_height": _support_height(scene, obj),
                "target_position": center,
                "target_support": surface,
            },
        )
    raise _reject(family, "no reachable object inside a container")


def pour_point(holder: ObjectInstance, receptacle: ObjectInstance) -> tuple[float, float, float]:
    """Where the holder's centre waits above the receptacle before tilting."""
    lx, ly, lz = receptacle.lip_point
    return (lx, ly, lz + holder.half_extents[2] + POUR_HEIGHT)


def _bind_pour(family, scene, rng, arm) -> _Binding:
    objects = _reachable_objects(scene, arm, family)
    holders = [o for o in objects if o.category in catalog.HOLDER_CATEGORIES and o.liquid_units > 0]
    receptacles = [o for o in loose_objects(scene) if o.category in catalog.RECEPTACLE_CATEGORIES]
    rng.shuffle(holders)
    for holder in holders:
        for receptacle in receptacles:
            if receptacle.capacity - receptacle.liquid_units < holder.liquid_units:
                continue
            above = pour_point(holder, receptacle)
            if not reachable(arm, above) or not reachable(arm, above, pitch=POUR_PITCH, pitch_weight=1.0, pitch_tolerance=0.15):
                continue
            return _Binding(
                scene,
                holder.id,
                {"holder": holder.id, "receptacle": receptacle.id},
                {
                    "support_height": _support_height(scene, holder),
                    "source_volume": holder.liquid_units,
                    "receptacle_start": receptacle.liquid_units,
                },
            )
    raise _reject(family, "needs a filled holder and a receptacle within reach")


_BINDERS = {
    "pick": _bind_pick,
    "reorient": _bind_reorient,
    "pick_and_place": _bind_place,
    "pour": _bind_pour,
}


def bind_family(family: str, scene: Scene, rng: np.random.Generator, arm: ArmModel) -> _Binding:
    if family in _BINDERS:
        return _BINDERS[family](family, scene, rng, arm)
    if family.startswith("fetch"):
        return _bind_fetch(family, scene, rng, arm)
    return _bind_container(family, scene, rng, arm)


def _object_text(scene: Scene, obj: ObjectInstance, common_sense: bool) -> str:
    text = describe(obj)
    if common_sense and obj.support in bank.ROOM_SURFACE_CUES[scene.room_type]:
        text += f" on the {surface_cue(scene, obj.support)}"
    return text


def _surface_text(scene: Scene, support: str, common_sense: bool) -> str:
    return surface_cue(scene, support) if common_sense else bank.SURFACE_NAMES[support]


def build_instruction(
    family: str,
    binding: _Binding,
    modality: str,
    total_delta: Optional[tuple[float, float]],
    seed,
    config: PipelineConfig,
) -> Instruction:
    """Render the family's instruction through the template bank."""
    scene = binding.scene
    roles = binding.bindings
    common_sense = modality == "common_sense"
    stage2 = None
    if family.startswith("fetch"):
        template = bank.template(f"pick.{modality}.container")
        slots = {
            "Object": describe(scene.object(roles["object"])),
            "target": describe_container(scene, roles["container"], common_sense),
        }
        stage2 = roles["object"]
    else:
        template = bank.template(f"{FAMILY_ACTION[family]}.{modality}")
        if "container" in roles:
            slots = {"Object": describe_container(scene, roles["container"], common_sense)}
        elif family == "pour":
            slots = {
                "Object": describe(scene.object(roles["holder"])),
                "target": _object_text(scene, scene.object(roles["receptacle"]), common_sense),
            }
        else:
            slots = {"Object": _object_text(scene, scene.object(roles["object"]), common_sense)}
            if family == "pick_and_place":
                slots["target"] = _surface_text(scene, binding.goals["target_support"], common_sense)
    bound = BoundTask(
        template,
        scene,
        target_id=binding.anchor_id,
        anchor=scene.anchor_point(binding.anchor_id),
        slots=slots,
        stage2_target_id=stage2,
    )
    return instantiate_template(
        template,
        scene,
        seed,
        total_delta=total_delta if "position" in template.slots else None,
        bound=bound,
        max_tokens=config.viewgen.max_instruction_tokens,
    )


def _validate(family: str, visibility_mode: str) -> None:
    problems = []
    if family not in TASK_FAMILIES:
        problems.append(f"Unknown task family {family!r}; expected one of {', '.join(TASK_FAMILIES)}")
    elif visibility_mode not in visibility_modes(family):
        problems.append(f"Visibility {visibility_mode!r} is not available for {family}")
    if problems:
        raise ConfigError(problems)


def sample_task(
    family: str,
    visibility_mode: str,
    seed: int,
    config: Optional[PipelineConfig] = None,
    scene_config=None,
) -> TaskSpec:
    """Sample a satisfiable task; deterministic for a fixed seed.

    Args:
        family: Task family.
        visibility_mode: How the anchor starts relative to the view.
        seed: Task seed; scene seeds are derived from it.
        config: Pipeline configuration (defaults to ``PipelineConfig()``).
        scene_config: Overrides the scene distribution, e.g. for held-out
            categories or shifted layouts.

    Raises:
        ConfigError: for an unknown family or unsupported mode.
        RejectionError: when no attempt within ``env.max_reset_attempts``
            satisfied the bindings and the visibility mode.
    """
    config = config or PipelineConfig()
    _validate(family, visibility_mode)
    scene_config = scene_config or task_scene_config(family, config)
    arm = ArmModel.from_config(config.world.arm)
    env = config.env
    last_error: Optional[Exception] = None
    for attempt in range(env.max_reset_attempts):
        rng = np.random.default_rng([seed, attempt])
        try:
            scene = sample_scene(scene_config, seed * TASK_SEED_STRIDE + attempt)
            binding = bind_family(family, scene, rng, arm)
            view = visibility.construct(visibility_mode, binding.scene, binding.anchor_id, rng, arm, config)
        except (RejectionError, GenerationError, DegenerateGeometryError) as e:
            logger.debug(f"{family}/{visibility_mode} seed {seed} attempt {attempt} rejected: {e}")
            last_error = e
            continue
        binding.scene = view.scene
        goals = dict(binding.goals)
        goals["velocity_eps"] = env.velocity_eps
        bindings = dict(binding.bindings)
        if view.occluder_id is not None:
            bindings["occluder"] = view.occluder_id
            goals["occluder_destination"] = view.occluder_destination
        if visibility_mode == "out_of_view":
            modality = "spatial_directive" if rng.uniform() < 0.5 else "common_sense"
        else:
            modality = "visual_centering"
        instruction = build_instruction(family, binding, modality, view.total_delta, [seed, attempt, 7], config)
        logger.debug(f"Sampled {family}/{visibility_mode} seed {seed} on attempt {attempt}: {instruction.text}")
        return TaskSpec(
            family=family,
            visibility=visibility_mode,
            seed=int(seed),
            scene=view.scene,
            camera=view.camera,
            anchor_id=binding.anchor_id,
            bindings=bindings,
            goals=goals,
            phases=FAMILY_PHASES[family],
            hold_duration=env.hold_duration,
            horizon=horizon_for(family, env),
            instruction=instruction,
        )
    raise RejectionError(
        f"{family}/{visibility_mode} seed {seed}: unsatisfiable after {env.max_reset_attempts} attempts: {last_error}"
    )
