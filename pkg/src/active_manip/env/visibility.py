"""Starting views for the four visibility modes of a manipulation episode."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import RejectionError
from ..world.arm import ArmModel
from ..world.camera import CameraState, apply_head_delta, camera_delta_to, in_frame, project_point
from ..world.render import render_view, unobstructed_count
from ..world.scene import ObjectInstance, Scene, aabb_overlap_volume
from ..viewgen.views import anchor_in_frustum, perturb_view, zero_view
from .reach import liftable

logger = logging.getLogger(__name__)

OCCLUDER_ID = "occluder"
OCCLUDER_CATEGORY = "box"
OCCLUDER_SIZES = (0.08, 0.10, 0.12, 0.14)
OCCLUDER_GAP = 0.01
MIN_RAY_CLEARANCE = 0.10
VIEW_ATTEMPTS = 64


@dataclass(frozen=True)
class StartView:
    """Scene and head pose an episode starts from.

    ``total_delta`` is the head motion from ``camera`` to the optimal view;
    ``occluder_id`` and ``occluder_destination`` are set only for physical
    occlusion.
    """

    scene: Scene
    camera: CameraState
    optimal: CameraState
    total_delta: tuple[float, float]
    occluder_id: Optional[str] = None
    occluder_destination: Optional[tuple[float, float, float]] = None


def entity_corners(scene: Scene, entity_id: str) -> np.ndarray:
    """The 8 corners of an object's box or a container's front."""
    if any(c.id == entity_id for c in scene.containers):
        center, half, yaw = scene.container(entity_id).front_box()
    else:
        obj = scene.object(entity_id)
        center, half, yaw = obj.position, obj.half_extents, obj.yaw
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
    return np.asarray(center) + (signs * np.asarray(half)) @ rot.T


def fully_in_frame(camera: CameraState, scene: Scene, entity_id: str) -> bool:
    for corner in entity_corners(scene, entity_id):
        projected = project_point(camera, corner)
        if projected is None or not in_frame(camera, projected[0], projected[1]):
            return False
    return True


def optimal_camera(scene: Scene, anchor_id: str, camera_config) -> CameraState:
    """Head pose centring the anchor; rejects anchors outside the head limits."""
    start = zero_view(camera_config, scene.head_pivot)
    anchor = scene.anchor_point(anchor_id)
    camera, clamped = apply_head_delta(start, camera_delta_to(start, anchor))
    if clamped and not anchor_in_frustum(camera, anchor):
        raise RejectionError(f"Anchor of {anchor_id} is outside the head limits")
    return camera


def in_central_region(camera: CameraState, point, fraction: float) -> bool:
    projected = project_point(camera, point)
    if projected is None:
        return False
    h, w = camera.raster_dims
    _, _, cx, cy = camera.intrinsics
    return abs(projected[0] - cx) <= fraction * w / 2.0 and abs(projected[1] - cy) <= fraction * h / 2.0


def vertical_fov(camera: CameraState) -> float:
    h, w = camera.raster_dims
    return math.degrees(2.0 * math.atan(math.tan(math.radians(camera.fov_h) / 2.0) * h / w))


def _delta(camera: CameraState, optimal: CameraState) -> tuple[float, float]:
    return float(optimal.pitch - camera.pitch), float(optimal.yaw - camera.yaw)


def _unoccluded(scene, anchor_id, optimal, rng, config) -> StartView:
    pitch_range, yaw_range = config.viewgen.centering_range
    for _ in range(VIEW_ATTEMPTS):
        offset = (rng.uniform(-pitch_range, pitch_range), rng.uniform(-yaw_range, yaw_range))
        camera, _ = apply_head_delta(optimal, offset)
        count = render_view(scene, camera).pixel_count(anchor_id)
        if count == 0 or count != unobstructed_count(scene, camera, anchor_id):
            continue
        if fully_in_frame(camera, scene, anchor_id):
            return StartView(scene, camera, optimal, _delta(camera, optimal))
    raise RejectionError(f"{anchor_id} is never fully and cleanly in view")


def _truncated(scene, anchor_id, optimal, rng, config) -> StartView:
    env = config.env
    reference = unobstructed_count(scene, optimal, anchor_id)
    if reference == 0:
        raise RejectionError(f"{anchor_id} covers no pixels at the optimal view")
    half_fov = (vertical_fov(optimal) / 2.0, optimal.fov_h / 2.0)
    anchor = scene.anchor_point(anchor_id)
    for _ in range(VIEW_ATTEMPTS):
        axis = int(rng.integers(2))
        offset = [0.0, 0.0]
        offset[axis] = float(rng.choice((-1.0, 1.0)) * rng.uniform(0.7, 1.1) * half_fov[axis])
        offset[1 - axis] = float(rng.uniform(-0.3, 0.3) * half_fov[1 - axis])
        camera, _ = apply_head_delta(optimal, offset)
        if in_central_region(camera, anchor, env.central_fraction):
            continue
        visible = render_view(scene, camera).pixel_count(anchor_id)
        if 1 <= visible < env.truncation_visible_max * reference:
            return StartView(scene, camera, optimal, _delta(camera, optimal))
    raise RejectionError(f"No truncated view of {anchor_id}")


def _out_of_view(scene, anchor_id, optimal, rng, config) -> StartView:
    camera = perturb_view(
        optimal,
        config.viewgen.search_range,
        "spatial_directive",
        int(rng.integers(2**31)),
        scene,
        anchor_id,
        max_attempts=VIEW_ATTEMPTS,
    )
    return StartView(scene, camera, optimal, _delta(camera, optimal))


def distance_to_segment(point, start, end) -> float:
    p, a, b = (np.asarray(v, dtype=np.float64) for v in (point, start, end))
    ab = b - a
    t = float(np.clip((p - a) @ ab / max(float(ab @ ab), 1e-12), 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def _fits(scene: Scene, probe: ObjectInstance, ignore: tuple[str, ...]) -> bool:
    support = scene.surface(probe.support)
    fx, fy = probe.footprint()
    if not support.contains(probe.position[0], probe.position[1], margin=max(fx, fy)):
        return False
    box = probe.aabb()
    return all(
        aabb_overlap_volume(box, other.aabb(), 0.005) == 0.0
        for other in scene.objects
        if other.id not in ignore and not scene.is_hidden(other.id)
    )


def _occluder_destination(scene, occluder, target, arm, rng, clearance) -> Optional[tuple[float, float, float]]:
    pivot = np.asarray(scene.head_pivot)
    ox, oy, oz = occluder.position
    dx, dy = target.position[0] - pivot[0], target.position[1] - pivot[1]
    norm = math.hypot(dx, dy)
    perpendicular = (-dy / norm, dx / norm)
    signs = (1.0, -1.0) if rng.uniform() < 0.5 else (-1.0, 1.0)
    for scale in (1.0, 1.3, 1.6):
        for sign in signs:
            x = ox + sign * scale * clearance * perpendicular[0]
            y = oy + sign * scale * clearance * perpendicular[1]
            probe = replace(occluder, position=(x, y, oz))
            if not _fits(scene, probe, (occluder.id,)):
                continue
            if distance_to_segment(probe.position, pivot, target.position) < MIN_RAY_CLEARANCE:
                continue
            if liftable(arm, probe.position):
                return probe.position
    return None


def _physical(scene, anchor_id, optimal, rng, config, arm) -> StartView:
    env = config.env
    target = scene.object(anchor_id)
    support = scene.surface(target.support)
    pivot = scene.head_pivot
    dx, dy = target.position[0] - pivot[0], target.position[1] - pivot[1]
    norm = math.hypot(dx, dy)
    if norm < 1e-6:
        raise RejectionError(f"{anchor_id} is directly below the head")
    ux, uy = dx / norm, dy / norm
    reference = unobstructed_count(scene, optimal, anchor_id)
    if reference == 0:
        raise RejectionError(f"{anchor_id} covers no pixels at the optimal view")
    color = str(rng.choice(("white", "black", "yellow")))
    radius = max(target.footprint())
    for size in OCCLUDER_SIZES:
        probe = ObjectInstance(
            id=OCCLUDER_ID,
            category=OCCLUDER_CATEGORY,
            color=color,
            size=size,
            position=(0.0, 0.0, 0.0),
            yaw=math.atan2(uy, ux),
            support=support.name,
        )
        hx, _, hz = probe.half_extents
        gap = radius + hx + OCCLUDER_GAP
        position = (target.position[0] - gap * ux, target.position[1] - gap * uy, support.height + hz)
        occluder = replace(probe, position=position)
        if not _fits(scene, occluder, ()):
            continue
        if not liftable(arm, position):
            continue
        occluded = replace(scene, objects=scene.objects + (occluder,))
        visible = render_view(occluded, optimal).pixel_count(anchor_id)
        coverage = 1.0 - visible / reference
        if coverage < env.occlusion_min_coverage:
            logger.debug(f"Occluder size {size} covers only {coverage:.2f} of {anchor_id}")
            continue
        destination = _occluder_destination(occluded, occluder, target, arm, rng, env.occluder_clearance)
        if destination is None:
            continue
        return StartView(occluded, optimal, optimal, (0.0, 0.0), OCCLUDER_ID, destination)
    raise RejectionError(f"Cannot hide {anchor_id} behind an occluder")


def construct(mode: str, scene: Scene, anchor_id: str, rng: np.random.Generator, arm: ArmModel, config) -> StartView:
    """Build the starting scene and head pose for ``mode``.

    Raises:
        RejectionError: when this scene cannot realise the mode.
    """
    optimal = optimal_camera(scene, anchor_id, config.world.camera)
    if mode == "unoccluded":
        return _unoccluded(scene, anchor_id, optimal, rng, config)
    if mode == "occluded_truncation":
        return _truncated(scene, anchor_id, optimal, rng, config)
    if mode == "occluded_physical":
        return _physical(scene, anchor_id, optimal, rng, config, arm)
    if mode == "out_of_view":
        return _out_of_view(scene, anchor_id, optimal, rng, config)
    raise ValueError(f"Unknown visibility mode {mode}")
