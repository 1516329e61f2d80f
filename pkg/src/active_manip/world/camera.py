"""Pinhole head camera with a pitch/yaw pivot.

Frames: world is z-up. The camera body frame is forward/left/up (x/y/z);
its rotation into the world is ``Rz(yaw) @ Ry(-pitch)``, i.e. yaw about the
world z-axis first, then pitch about the camera's lateral axis. Positive
pitch looks up, positive yaw turns left.

Image coordinates: column ``u`` grows to the right, row ``v`` grows
downwards, pixel ``(v, u)`` has its centre at ``(u, v)`` and the principal
point ``(cx, cy)`` is the centre of pixel ``(H // 2, W // 2)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import DegenerateGeometryError

logger = logging.getLogger(__name__)

Vec3 = tuple[float, float, float]

DEFAULT_PIVOT: Vec3 = (0.0, 0.0, 1.25)


def wrap_degrees(angle: float) -> float:
    """Wrap an angle in degrees to (-180, 180]."""
    wrapped = math.fmod(angle + 180.0, 360.0)
    if wrapped <= 0.0:
        wrapped += 360.0
    return wrapped - 180.0


@dataclass(frozen=True)
class CameraState:
    """Head pose plus the static optics of the camera.

    Attributes:
        pitch: Degrees, positive looks up.
        yaw: Degrees, positive turns left.
        limits: ``(pitch_lo, pitch_hi, yaw_lo, yaw_hi)`` in degrees.
        fov_h: Horizontal field of view in degrees.
        raster_dims: ``(H, W)``.
        pivot: World position of the rotation centre (the optical centre).
    """

    pitch: float = 0.0
    yaw: float = 0.0
    limits: tuple[float, float, float, float] = (-60.0, 60.0, -90.0, 90.0)
    fov_h: float = 90.0
    raster_dims: tuple[int, int] = (48, 48)
    pivot: Vec3 = DEFAULT_PIVOT

    def __post_init__(self) -> None:
        if not 10.0 < self.fov_h < 170.0:
            raise ValueError(f"fov_h must lie in (10, 170), got {self.fov_h}")
        lo_p, hi_p, lo_y, hi_y = self.limits
        if lo_p > hi_p or lo_y > hi_y:
            raise ValueError(f"Invalid camera limits: {self.limits}")

    @classmethod
    def from_config(cls, camera_config, pivot: Vec3 = DEFAULT_PIVOT) -> "CameraState":
        return cls(
            limits=(*camera_config.pitch_limits, *camera_config.yaw_limits),
            fov_h=camera_config.fov_h,
            raster_dims=tuple(camera_config.raster),
            pivot=tuple(pivot),
        )

    @property
    def intrinsics(self) -> tuple[float, float, float, float]:
        """``(fx, fy, cx, cy)`` in pixels; square pixels."""
        h, w = self.raster_dims
        fx = (w / 2.0) / math.tan(math.radians(self.fov_h) / 2.0)
        return fx, fx, float(w // 2), float(h // 2)

    @property
    def within_limits(self) -> bool:
        lo_p, hi_p, lo_y, hi_y = self.limits
        return lo_p <= self.pitch <= hi_p and lo_y <= self.yaw <= hi_y

    def rotation(self) -> np.ndarray:
        """3x3 matrix whose columns are forward, left and up in world."""
        p = math.radians(self.pitch)
        y = math.radians(self.yaw)
        cp, sp, cy, sy = math.cos(p), math.sin(p), math.cos(y), math.sin(y)
        forward = (cp * cy, cp * sy, sp)
        left = (-sy, cy, 0.0)
        up = (-sp * cy, -sp * sy, cp)
        return np.array([forward, left, up], dtype=np.float64).T

    def clamped(self) -> "CameraState":
        lo_p, hi_p, lo_y, hi_y = self.limits
        return replace(
            self,
            pitch=min(max(self.pitch, lo_p), hi_p),
            yaw=min(max(self.yaw, lo_y), hi_y),
        )

    def pose(self) -> tuple[float, float, Vec3]:
        return self.pitch, self.yaw, self.pivot


def apply_head_delta(
    camera: CameraState, delta: tuple[float, float], clamp: bool = True
) -> tuple[CameraState, bool]:
    """Add ``(dpitch, dyaw)`` and clamp to the head limits.

    Returns:
        The new state and whether clamping changed the exact sum.
    """
    d_pitch, d_yaw = float(delta[0]), float(delta[1])
    raw = replace(camera, pitch=camera.pitch + d_pitch, yaw=camera.yaw + d_yaw)
    if not clamp:
        return raw, False
    bounded = raw.clamped()
    was_clamped = bounded.pitch != raw.pitch or bounded.yaw != raw.yaw
    return bounded, was_clamped


def bearing_to(pivot: Vec3, target: Vec3) -> tuple[float, float]:
    """Absolute ``(pitch, yaw)`` in degrees putting ``target`` on the axis.

    Raises:
        DegenerateGeometryError: if ``target`` coincides with ``pivot``.
    """
    dx = target[0] - pivot[0]
    dy = target[1] - pivot[1]
    dz = target[2] - pivot[2]
    horizontal = math.hypot(dx, dy)
    if math.sqrt(horizontal * horizontal + dz * dz) < 1e-9:
        raise DegenerateGeometryError(
            f"Target {tuple(target)} coincides with the camera pivot"
        )
    pitch = math.degrees(math.atan2(dz, horizontal))
    yaw = math.degrees(math.atan2(dy, dx)) if horizontal > 1e-12 else None
    return pitch, yaw


def camera_delta_to(camera: CameraState, target: Vec3) -> tuple[float, float]:
    """Minimal ``(dpitch, dyaw)`` in degrees centring ``target`` in the view.

    Yaw is wrapped to (-180, 180]. A target straight above or below the pivot
    needs no yaw change.
    """
    pitch, yaw = bearing_to(camera.pivot, target)
    d_pitch = pitch - camera.pitch
    d_yaw = 0.0 if yaw is None else wrap_degrees(yaw - camera.yaw)
    return d_pitch, d_yaw


def to_camera_frame(camera: CameraState, point: Vec3) -> np.ndarray:
    offset = np.asarray(point, dtype=np.float64) - np.asarray(camera.pivot, dtype=np.float64)
    return camera.rotation().T @ offset


def project_point(
    camera: CameraState, point: Vec3
) -> Optional[tuple[float, float, float]]:
    """Project a world point to ``(u, v, range)``.

    ``range`` is the distance from the pivot, matching the depth raster.
    Returns None for points on or behind the image plane.
    """
    x, y, z = to_camera_frame(camera, point)
    if x <= 1e-9:
        return None
    fx, fy, cx, cy = camera.intrinsics
    u = cx - fx * y / x
    v = cy - fy * z / x
    return float(u), float(v), float(math.sqrt(x * x + y * y + z * z))


def in_frame(camera: CameraState, u: float, v: float) -> bool:
    h, w = camera.raster_dims
    return -0.5 <= u < w - 0.5 and -0.5 <= v < h - 0.5


def pixel_rays(camera: CameraState) -> np.ndarray:
    """Unit ray directions, camera frame, shape ``(H, W, 3)``."""
    h, w = camera.raster_dims
    fx, fy, cx, cy = camera.intrinsics
    vv, uu = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    rays = np.stack(
        [np.ones_like(uu), -(uu - cx) / fx, -(vv - cy) / fy], axis=-1
    )
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def rays_for_raster(
    raster_dims: tuple[int, int], fov_h: float
) -> np.ndarray:
    """Rays for a raster without a full state; used when decoding blobs."""
    return pixel_rays(CameraState(raster_dims=tuple(raster_dims), fov_h=fov_h))
