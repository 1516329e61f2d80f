"""Observation rendering by analytic ray casting.

One ray per pixel centre is intersected with every visible primitive
(spheres and yawed boxes); the nearest positive hit wins. Depth is the range
along the unit ray, so ``pivot + depth * R @ ray`` lands on the hit surface.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import catalog
from .camera import CameraState, pixel_rays

logger = logging.getLogger(__name__)

DEPTH_EMPTY = 0.0
EMPTY_INSTANCE = -1
_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Observation:
    """Rendered head (or wrist) view.

    Attributes:
        semantic_raster: ``(H, W, C)`` float32 one-hot category, colour and
            graspable channels; all zero for empty pixels.
        depth_raster: ``(H, W)`` range in metres, ``DEPTH_EMPTY`` if empty.
        ray_dirs: ``(H, W, 3)`` unit rays in the camera frame.
        intrinsics: ``(fx, fy, cx, cy)``.
        camera_pose: ``(pitch, yaw, pivot)``.
        instance_raster: ``(H, W)`` index into ``instance_ids`` or -1.
        instance_ids: ids of the rendered primitives.
        wrist_observation: optional end-effector camera view.
    """

    semantic_raster: np.ndarray
    depth_raster: np.ndarray
    ray_dirs: np.ndarray
    intrinsics: tuple[float, float, float, float]
    camera_pose: tuple[float, float, tuple[float, float, float]]
    instance_raster: np.ndarray
    instance_ids: tuple[str, ...]
    wrist_observation: Optional["Observation"] = None

    @property
    def raster_dims(self) -> tuple[int, int]:
        return tuple(self.depth_raster.shape)

    @property
    def valid_mask(self) -> np.ndarray:
        return self.instance_raster != EMPTY_INSTANCE

    def pixel_count(self, entity_id: str) -> int:
        if entity_id not in self.instance_ids:
            return 0
        index = self.instance_ids.index(entity_id)
        return int(np.count_nonzero(self.instance_raster == index))


@dataclass(frozen=True)
class Primitive:
    id: str
    category: str
    color: str
    graspable: bool
    shape: str
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    yaw: float = 0.0


def scene_primitives(scene, exclude: tuple[str, ...] = ()) -> list[Primitive]:
    """Everything the camera can see: visible objects and container fronts."""
    prims = []
    for obj in scene.objects:
        if obj.id in exclude or scene.is_hidden(obj.id):
            continue
        prims.append(
            Primitive(obj.id, obj.category, obj.color, obj.graspable, obj.shape, obj.position, obj.half_extents, obj.yaw)
        )
    for container in scene.containers:
        if container.id in exclude:
            continue
        center, half, yaw = container.front_box()
        prims.append(Primitive(container.id, container.kind, container.color, False, "box", center, half, yaw))
    return prims


def _intersect_sphere(origin: np.ndarray, dirs: np.ndarray, prim: Primitive) -> np.ndarray:
    oc = origin - np.asarray(prim.center)
    r = prim.half_extents[0]
    b = dirs @ oc
    c = float(oc @ oc) - r * r
    disc = b * b - c
    t = np.full(dirs.shape[0], np.inf)
    hit = disc >= 0.0
    near = -b[hit] - np.sqrt(disc[hit])
    t_hit = np.where(near > _EPS, near, np.inf)
    t[hit] = t_hit
    return t


def _intersect_box(origin: np.ndarray, dirs: np.ndarray, prim: Primitive) -> np.ndarray:
    c, s = math.cos(prim.yaw), math.sin(prim.yaw)
    # world -> box frame is Rz(-yaw)
    to_local = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    o = to_local @ (origin - np.asarray(prim.center))
    d = dirs @ to_local.T
    half = np.asarray(prim.half_extents)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    t_near = np.nanmax(np.minimum(t1, t2), axis=1)
    t_far = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (t_far >= t_near) & (t_near > _EPS)
    return np.where(hit, t_near, np.inf)


def cast(
    camera: CameraState, prims: list[Primitive]
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit per pixel: ``(depth, index)`` each ``(H, W)``."""
    h, w = camera.raster_dims
    rays_cam = pixel_rays(camera).reshape(-1, 3)
    dirs = rays_cam @ camera.rotation().T
    origin = np.asarray(camera.pivot, dtype=np.float64)
    best_t = np.full(h * w, np.inf)
    best_i = np.full(h * w, EMPTY_INSTANCE, dtype=np.int32)
    for index, prim in enumerate(prims):
        if prim.shape == "sphere":
            t = _intersect_sphere(origin, dirs, prim)
        else:
            t = _intersect_box(origin, dirs, prim)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_i[closer] = index
    depth = np.where(np.isfinite(best_t), best_t, DEPTH_EMPTY)
    return depth.reshape(h, w), best_i.reshape(h, w)


def _semantic(prims: list[Primitive], index: np.ndarray) -> np.ndarray:
    h, w = index.shape
    raster = np.zeros((h, w, catalog.N_SEMANTIC_CHANNELS), dtype=np.float32)
    layout = catalog.semantic_channel_layout()
    col0 = layout["color"][0]
    grasp_ch = layout["graspable"][0]
    for i, prim in enumerate(prims):
        mask = index == i
        if not mask.any():
            continue
        raster[mask, catalog.category_index(prim.category)] = 1.0
        raster[mask, col0 + catalog.color_index(prim.color)] = 1.0
        if prim.graspable:
            raster[mask, grasp_ch] = 1.0
    return raster


def render_view(
    scene, camera: CameraState, exclude: tuple[str, ...] = ()
) -> Observation:
    prims = scene_primitives(scene, exclude)
    depth, index = cast(camera, prims)
    return Observation(
        semantic_raster=_semantic(prims, index),
        depth_raster=depth,
        ray_dirs=pixel_rays(camera),
        intrinsics=camera.intrinsics,
        camera_pose=camera.pose(),
        instance_raster=index,
        instance_ids=tuple(p.id for p in prims),
    )


def render(
    scene,
    camera: CameraState,
    proprio=None,
    arm=None,
    wrist: bool = False,
) -> Observation:
    """Render the head view, plus the wrist view when requested.

    Args:
        scene: The scene to draw.
        camera: Head camera state.
        proprio: Robot state; only needed for the wrist view.
        arm: ``ArmModel`` giving the wrist camera pose.
        wrist: Attach a wrist ``Observation``.
    """
    head = render_view(scene, camera)
    if not wrist:
        return head
    if proprio is None or arm is None:
        raise ValueError("Wrist rendering needs both proprio and arm")
    wrist_camera = arm.wrist_camera(proprio.arm_joints, camera)
    wrist_obs = render_view(scene, wrist_camera)
    return Observation(
        semantic_raster=head.semantic_raster,
        depth_raster=head.depth_raster,
        ray_dirs=head.ray_dirs,
        intrinsics=head.intrinsics,
        camera_pose=head.camera_pose,
        instance_raster=head.instance_raster,
        instance_ids=head.instance_ids,
        wrist_observation=wrist_obs,
    )


def unobstructed_count(scene, camera: CameraState, entity_id: str) -> int:
    """Pixels ``entity_id`` would cover if nothing else were drawn."""
    others = tuple(
        p.id for p in scene_primitives(scene) if p.id != entity_id
    )
    return render_view(scene, camera, exclude=others).pixel_count(entity_id)
