"""Optimal viewpoints, perturbed start views and ground-truth camera chunks."""

from __future__ import annotations

import logging

import numpy as np

from ..config import CameraConfig
from ..errors import InfeasiblePerturbationError, RejectionError
from ..world.camera import (
    CameraState,
    apply_head_delta,
    camera_delta_to,
    in_frame,
    project_point,
)
from ..world.render import render_view, unobstructed_count

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 500


def zero_view(camera_config, pivot) -> CameraState:
    """Canonical start pose ``(0, 0)`` with the configured optics."""
    return CameraState.from_config(camera_config, pivot=tuple(pivot))


def anchor_offset_px(camera: CameraState, anchor) -> float:
    """Pixel distance of the anchor's projection from the principal point."""
    projected = project_point(camera, anchor)
    if projected is None:
        return float("inf")
    _, _, cx, cy = camera.intrinsics
    return float(np.hypot(projected[0] - cx, projected[1] - cy))


def anchor_in_frustum(camera: CameraState, anchor) -> bool:
    projected = project_point(camera, anchor)
    return projected is not None and in_frame(camera, projected[0], projected[1])


def optimal_view(scene, task, camera_config=None) -> CameraState:
    """Head pose centring the task anchor, clamped to the head limits.

    Args:
        scene: Scene the task is bound in.
        task: A ``BoundTask``; its ``anchor`` is the point to centre.
        camera_config: Optics and limits; defaults to ``CameraConfig()``.

    Raises:
        RejectionError: if clamping keeps the anchor out of the frustum.
    """
    camera_config = camera_config or CameraConfig()
    start = zero_view(camera_config, scene.head_pivot)
    delta = camera_delta_to(start, task.anchor)
    camera, clamped = apply_head_delta(start, delta)
    if clamped and not anchor_in_frustum(camera, task.anchor):
        raise RejectionError(
            f"Anchor of {task.target_id} is outside the head limits (needs {delta[0]:.1f}, {delta[1]:.1f} deg)",
            template_id=task.template.id,
        )
    if clamped:
        logger.debug(f"Optimal view for {task.target_id} is clamp-limited")
    return camera


def is_clamp_limited(camera: CameraState, anchor) -> bool:
    return anchor_offset_px(camera, anchor) > 0.5


def visibility_condition(modality: str, scene, camera: CameraState, target_id: str) -> bool:
    """Whether a start view suits the modality.

    Visual centering needs the target at least partly visible; the other
    modalities need it entirely outside the frame.
    """
    if modality == "visual_centering":
        return render_view(scene, camera).pixel_count(target_id) >= 1
    return unobstructed_count(scene, camera, target_id) == 0


def perturb_view(
    optimal: CameraState,
    ranges: tuple[float, float],
    modality: str,
    seed,
    scene,
    target_id: str,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> CameraState:
    """Sample a start view by uniformly offsetting ``optimal`` within ``ranges``.

    Offsets are clamped to the head limits and resampled until the
    modality's visibility condition holds.

    Raises:
        InfeasiblePerturbationError: after ``max_attempts`` failed samples.
    """
    pitch_range, yaw_range = (float(r) for r in ranges)
    if pitch_range < 0 or yaw_range < 0:
        raise ValueError(f"Perturbation ranges must be non-negative, got {ranges}")
    if pitch_range == 0 and yaw_range == 0:
        if visibility_condition(modality, scene, optimal, target_id):
            return optimal
        raise InfeasiblePerturbationError(
            f"Zero perturbation range cannot satisfy {modality} for {target_id}"
        )
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        offset = (rng.uniform(-pitch_range, pitch_range), rng.uniform(-yaw_range, yaw_range))
        candidate, _ = apply_head_delta(optimal, offset)
        if visibility_condition(modality, scene, candidate, target_id):
            return candidate
    raise InfeasiblePerturbationError(
        f"No {modality} start view for {target_id} after {max_attempts} attempts"
    )


def make_gt_chunk(
    total_delta: tuple[float, float], k: int, per_step_cap: float
) -> tuple[np.ndarray, bool]:
    """Split a head motion into ``k`` identical capped steps.

    Returns:
        ``(chunk, saturated)``: a ``(k, 2)`` array in degrees and whether the
        cap cut the motion short on either axis.
    """
    if k < 1:
        raise ValueError(f"Chunk horizon must be >= 1, got {k}")
    if per_step_cap <= 0:
        raise ValueError(f"Per-step cap must be positive, got {per_step_cap}")
    step = np.asarray(total_delta, dtype=np.float64) / k
    capped = np.clip(step, -per_step_cap, per_step_cap)
    saturated = bool(np.any(np.abs(step) > per_step_cap))
    return np.tile(capped, (k, 1)), saturated
