"""Binding templates to scenes and rendering the resulting instructions."""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from ..config import CameraConfig
from ..errors import RejectionError
from ..world import catalog
from ..world.camera import apply_head_delta, camera_delta_to, project_point
from ..world.scene import ObjectInstance, Scene, drive_container
from . import templates as bank
from .templates import TaskTemplate
from .views import zero_view
from .vocab import UNK_ID, Vocabulary, default_vocabulary, normalize

logger = logging.getLogger(__name__)

# Fraction of the larger axis an axis must reach to be named in a directive.
DIRECTIVE_AXIS_RATIO = 0.5


@dataclass(frozen=True)
class Instruction:
    """A rendered, tokenized instruction.

    Attributes:
        text: Normalized surface form.
        tokens: BOS followed by vocabulary ids.
        modality: Template modality.
        target_object_id: Entity the head must look at first.
        stage2_target_id: Second look target of two-stage container tasks.
        template_id: Template the instruction came from.
        unknown_count: Words that fell back to UNK.
    """

    text: str
    tokens: tuple[int, ...]
    modality: str
    target_object_id: str
    stage2_target_id: Optional[str] = None
    template_id: str = ""
    unknown_count: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "tokens": list(self.tokens),
            "modality": self.modality,
            "target_object_id": self.target_object_id,
            "stage2_target_id": self.stage2_target_id,
            "template_id": self.template_id,
            "unknown_count": self.unknown_count,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Instruction":
        return cls(
            text=data["text"],
            tokens=tuple(int(t) for t in data["tokens"]),
            modality=data["modality"],
            target_object_id=data["target_object_id"],
            stage2_target_id=data.get("stage2_target_id"),
            template_id=data.get("template_id", ""),
            unknown_count=int(data.get("unknown_count", 0)),
        )


@dataclass(frozen=True)
class BoundTask:
    """A template with every scene-dependent slot resolved.

    ``target_id`` is the entity whose anchor the head should centre: the
    object for pick/reorient/place, the receptacle for pour and the
    container for open/close and container interaction.
    """

    template: TaskTemplate
    scene: Scene
    target_id: str
    anchor: tuple[float, float, float]
    slots: dict[str, str] = field(default_factory=dict)
    stage2_target_id: Optional[str] = None
    subject_id: Optional[str] = None
    destination: Optional[str] = None
    scene_edits: tuple[tuple[str, float], ...] = ()


def _reject(template: TaskTemplate, message: str) -> RejectionError:
    return RejectionError(f"{template.id}: {message}", template_id=template.id)


def loose_objects(scene: Scene) -> list[ObjectInstance]:
    """Visible graspable objects that are not inside a container."""
    return [
        o for o in scene.objects
        if o.graspable and scene.container_of(o.id) is None and not scene.is_hidden(o.id)
    ]


def describe(obj: ObjectInstance) -> str:
    return f"{obj.color} {obj.category}"


def surface_cue(scene: Scene, support: str) -> str:
    """Room-specific name of a base surface."""
    cues = bank.ROOM_SURFACE_CUES[scene.room_type]
    if support not in cues:
        raise KeyError(f"No room cue for support {support}")
    return cues[support]


def _nearest_surface(scene: Scene, point) -> str:
    best = min(
        scene.surfaces,
        key=lambda s: math.hypot(point[0] - s.center[0], point[1] - s.center[1]),
    )
    return best.name


def describe_container(scene: Scene, container_id: str, with_cue: bool) -> str:
    container = scene.container(container_id)
    text = f"{container.color} {container.kind}"
    if with_cue:
        prep = bank.CONTAINER_PREPOSITIONS[container.kind]
        cue = surface_cue(scene, _nearest_surface(scene, container.handle_point()))
        text += f" {prep} the {cue}"
    return text


def _with_cue(scene: Scene, obj: ObjectInstance, text: str, common_sense: bool) -> str:
    if common_sense and obj.support in bank.ROOM_SURFACE_CUES[scene.room_type]:
        return f"{text} on the {surface_cue(scene, obj.support)}"
    return text


def _uniquely_described(objects: Sequence[ObjectInstance]) -> list[ObjectInstance]:
    counts = Counter((o.color, o.category) for o in objects)
    return [o for o in objects if counts[(o.color, o.category)] == 1]


def _groups(objects: Sequence[ObjectInstance], min_size: int, max_size: int) -> dict[str, list[ObjectInstance]]:
    groups: dict[str, list[ObjectInstance]] = defaultdict(list)
    for obj in objects:
        groups[obj.category].append(obj)
    return {k: v for k, v in sorted(groups.items()) if min_size <= len(v) <= max_size}


def _pick(rng: np.random.Generator, items: Sequence):
    return items[int(rng.integers(len(items)))]


def _centred_camera(scene: Scene, camera_config: CameraConfig, point):
    start = zero_view(camera_config, scene.head_pivot)
    camera, _ = apply_head_delta(start, camera_delta_to(start, point))
    return camera


def _left_to_right(camera, objects: Sequence[ObjectInstance]) -> Optional[list[ObjectInstance]]:
    projected = [(project_point(camera, o.position), o) for o in objects]
    if any(p is None for p, _ in projected):
        return None
    return [o for _, o in sorted(projected, key=lambda item: (item[0][0], item[1].id))]


def _bind_reasoning(
    template: TaskTemplate, scene: Scene, rng: np.random.Generator, camera_config: CameraConfig
) -> tuple[ObjectInstance, str]:
    objects = loose_objects(scene)
    if template.reasoning == "ordinal":
        groups = _groups(objects, 2, len(bank.ORDINALS))
        if not groups:
            raise _reject(template, "no category with 2 to 5 instances")
        category = _pick(rng, sorted(groups))
        members = groups[category]
        centroid = np.mean([o.position for o in members], axis=0)
        ordered = _left_to_right(_centred_camera(scene, camera_config, centroid), members)
        if ordered is None:
            raise _reject(template, f"{category} instances do not all project into the reference view")
        index = int(rng.integers(len(ordered)))
        target = ordered[index]
        if _left_to_right(_centred_camera(scene, camera_config, target.position), members) != ordered:
            raise _reject(template, f"{category} ordering changes in the target view")
        return target, f"{bank.ORDINALS[index]} {category} from left to right"
    if template.reasoning == "superlative":
        groups = {
            k: v for k, v in _groups(objects, 2, len(objects)).items()
            if len({round(o.size, 6) for o in v}) == len(v)
        }
        if not groups:
            raise _reject(template, "no category with instances of distinct sizes")
        category = _pick(rng, sorted(groups))
        word = _pick(rng, bank.SUPERLATIVES)
        members = groups[category]
        target = max(members, key=lambda o: o.size) if word == "biggest" else min(members, key=lambda o: o.size)
        return target, f"{word} {category}"
    if template.reasoning == "color":
        candidates = []
        for category, members in _groups(objects, 2, len(objects)).items():
            colours = Counter(o.color for o in members)
            if len(colours) >= 2:
                candidates.extend(o for o in members if colours[o.color] == 1)
        if not candidates:
            raise _reject(template, "no category distinguished by colour")
        target = _pick(rng, candidates)
        return target, describe(target)
    raise _reject(template, f"unknown reasoning kind {template.reasoning}")


def bind_template(
    template: TaskTemplate,
    scene: Scene,
    seed,
    camera_config: Optional[CameraConfig] = None,
) -> BoundTask:
    """Resolve the target entity and the ``[Object]``/``[target]`` slots.

    ``[position]`` is left unbound; it depends on the start view and is
    filled by ``instantiate_template``.

    Raises:
        RejectionError: if the scene has nothing the template can refer to.
    """
    camera_config = camera_config or CameraConfig()
    rng = np.random.default_rng(seed)
    common_sense = template.modality == "common_sense"
    action = template.atomic_action

    if template.augmentation == "container_interaction":
        options = [
            c for c in scene.containers
            if c.interior_objects and not c.interior_visible
        ]
        if not options:
            raise _reject(template, "no closed container with contents")
        container = _pick(rng, options)
        inner = scene.object(_pick(rng, container.interior_objects))
        return BoundTask(
            template,
            scene,
            target_id=container.id,
            anchor=container.handle_point(),
            slots={
                "Object": describe(inner),
                "target": describe_container(scene, container.id, common_sense),
            },
            stage2_target_id=inner.id,
        )

    if template.augmentation == "conditional_reasoning":
        target, text = _bind_reasoning(template, scene, rng, camera_config)
        return BoundTask(
            template,
            scene,
            target_id=target.id,
            anchor=target.grasp_point,
            slots={"Object": _with_cue(scene, target, text, common_sense)},
        )

    if action in ("pick", "reorient", "place"):
        candidates = _uniquely_described(loose_objects(scene))
        if not candidates:
            raise _reject(template, "no uniquely described loose object")
        target = _pick(rng, candidates)
        slots = {"Object": _with_cue(scene, target, describe(target), common_sense)}
        destination = None
        if action == "place":
            choices = [s.name for s in scene.surfaces if s.name != target.support]
            destination = _pick(rng, choices)
            slots["target"] = (
                surface_cue(scene, destination) if common_sense else bank.SURFACE_NAMES[destination]
            )
        return BoundTask(
            template,
            scene,
            target_id=target.id,
            anchor=target.grasp_point,
            slots=slots,
            subject_id=target.id,
            destination=destination,
        )

    if action == "pour":
        objects = loose_objects(scene)
        holders = [
            o for o in _uniquely_described(objects)
            if o.category in catalog.HOLDER_CATEGORIES and o.liquid_units > 0
        ]
        receptacles = [
            o for o in _uniquely_described(objects)
            if o.category in catalog.RECEPTACLE_CATEGORIES
        ]
        if not holders or not receptacles:
            raise _reject(template, "needs a filled holder and a receptacle")
        holder = _pick(rng, holders)
        receptacle = _pick(rng, receptacles)
        return BoundTask(
            template,
            scene,
            target_id=receptacle.id,
            anchor=receptacle.lip_point,
            slots={
                "Object": describe(holder),
                "target": _with_cue(scene, receptacle, describe(receptacle), common_sense),
            },
            subject_id=holder.id,
        )

    if action in ("open", "close"):
        if not scene.containers:
            raise _reject(template, "scene has no containers")
        counts = Counter((c.color, c.kind) for c in scene.containers)
        options = [c for c in scene.containers if counts[(c.color, c.kind)] == 1]
        if action == "open":
            options = [c for c in options if c.openness < 0.5]
        if not options:
            raise _reject(template, f"no container to {action}")
        container = _pick(rng, options)
        edits: tuple[tuple[str, float], ...] = ()
        if action == "close" and container.openness < 0.5:
            value = float(container.joint.limit * rng.uniform(0.6, 1.0))
            scene = drive_container(scene, container.id, value - container.joint.value)
            container = scene.container(container.id)
            edits = ((container.id, container.joint.value),)
        return BoundTask(
            template,
            scene,
            target_id=container.id,
            anchor=container.handle_point(),
            slots={"Object": describe_container(scene, container.id, common_sense)},
            scene_edits=edits,
        )

    raise _reject(template, f"unsupported action {action}")


def position_phrase(total_delta: tuple[float, float]) -> str:
    """Head-motion directive for a ``(dpitch, dyaw)`` motion in degrees.

    Positive yaw is "left", positive pitch is "up". An axis is named when it
    reaches half of the larger one.
    """
    d_pitch, d_yaw = float(total_delta[0]), float(total_delta[1])
    biggest = max(abs(d_pitch), abs(d_yaw))
    if biggest == 0.0:
        raise ValueError("A directive needs a non-zero head motion")
    parts = []
    if abs(d_pitch) >= DIRECTIVE_AXIS_RATIO * biggest:
        parts.append("up" if d_pitch > 0 else "down")
    if abs(d_yaw) >= DIRECTIVE_AXIS_RATIO * biggest:
        parts.append("left" if d_yaw > 0 else "right")
    return " and ".join(parts)


def fill_slots(phrase: str, slots: dict[str, str]) -> str:
    def replace(match) -> str:
        name = match.group(1)
        if name not in slots:
            raise KeyError(f"Slot [{name}] has no binding")
        return slots[name]

    return bank.SLOT_PATTERN.sub(replace, phrase)


def instantiate_template(
    template: TaskTemplate,
    scene: Scene,
    seed,
    total_delta: Optional[tuple[float, float]] = None,
    bound: Optional[BoundTask] = None,
    vocabulary: Optional[Vocabulary] = None,
    max_tokens: Optional[int] = None,
) -> Instruction:
    """Bind ``template`` in ``scene`` and render a tokenized instruction.

    Args:
        template: Template to instantiate.
        scene: Scene providing the referents.
        seed: Seeds both binding and the paraphrase choice.
        total_delta: Ground-truth head motion; required for ``[position]``.
        bound: A binding already computed for the same template and scene.
        vocabulary: Defaults to the closed template vocabulary.
        max_tokens: Longest token sequence allowed; longer ones raise DimensionError.
    """
    bound = bound or bind_template(template, scene, seed)
    slots = dict(bound.slots)
    if "position" in template.slots:
        if total_delta is None:
            raise ValueError(f"{template.id}: [position] needs the ground-truth head motion")
        slots["position"] = position_phrase(total_delta)
    phrase_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    phrase = template.paraphrases[int(phrase_rng.integers(len(template.paraphrases)))]
    text = normalize(fill_slots(phrase, slots))
    vocabulary = vocabulary or default_vocabulary()
    tokens = vocabulary.encode(text, max_tokens)
    return Instruction(
        text=text,
        tokens=tuple(tokens),
        modality=template.modality,
        target_object_id=bound.target_id,
        stage2_target_id=bound.stage2_target_id,
        template_id=template.id,
        unknown_count=sum(1 for t in tokens if t == UNK_ID),
    )
