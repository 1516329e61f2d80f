"""Tests for the pinhole head camera."""

import math

import numpy as np
import pytest

from active_manip.errors import DegenerateGeometryError
from active_manip.world.camera import (
    CameraState,
    apply_head_delta,
    camera_delta_to,
    pixel_rays,
    project_point,
    wrap_degrees,
)


class TestApplyHeadDelta:
    """Head updates add component-wise and clamp to the limits."""

    def test_zero_delta_leaves_state_unchanged(self, camera):
        # Act
        moved, clamped = apply_head_delta(camera, (0.0, 0.0))

        # Assert
        assert moved == camera
        assert clamped is False

    def test_saturated_pitch_stays_at_limit(self):
        # Arrange
        camera = CameraState(pitch=60.0)

        # Act
        moved, clamped = apply_head_delta(camera, (10.0, 0.0))

        # Assert
        assert moved.pitch == 60.0
        assert clamped is True

    def test_within_limits_is_exact_addition(self, camera):
        moved, clamped = apply_head_delta(camera, (5.0, -5.0))

        assert (moved.pitch, moved.yaw) == (5.0, -5.0)
        assert clamped is False

    def test_unclamped_update_can_leave_limits(self, camera):
        moved, clamped = apply_head_delta(camera, (80.0, 0.0), clamp=False)

        assert moved.pitch == 80.0
        assert not moved.within_limits
        assert clamped is False


class TestCameraDeltaTo:
    """Deltas that put a world point on the optical axis."""

    def test_target_on_axis_needs_no_motion(self, camera):
        target = (1.0, 0.0, 1.25)

        d_pitch, d_yaw = camera_delta_to(camera, target)

        assert d_pitch == pytest.approx(0.0, abs=1e-12)
        assert d_yaw == pytest.approx(0.0, abs=1e-12)

    def test_target_45_degrees_left_at_camera_height(self, camera):
        target = (1.0, 1.0, 1.25)

        d_pitch, d_yaw = camera_delta_to(camera, target)

        assert d_pitch == pytest.approx(0.0, abs=1e-12)
        assert d_yaw == pytest.approx(45.0)

    def test_equal_forward_and_vertical_offset(self, camera):
        target = (0.5, 0.0, 1.75)

        d_pitch, d_yaw = camera_delta_to(camera, target)

        assert d_pitch == pytest.approx(45.0)
        assert d_yaw == pytest.approx(0.0, abs=1e-12)

    def test_target_at_pivot_is_degenerate(self, camera):
        with pytest.raises(DegenerateGeometryError):
            camera_delta_to(camera, camera.pivot)

    def test_yaw_delta_is_wrapped(self):
        camera = CameraState(yaw=170.0, limits=(-60.0, 60.0, -180.0, 180.0))
        target = (-1.0, -0.2, 1.25)

        _, d_yaw = camera_delta_to(camera, target)

        assert -180.0 < d_yaw <= 180.0
        assert abs(d_yaw) < 30.0

    def test_applying_delta_centres_random_targets(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            camera = CameraState(pitch=rng.uniform(-60, 60), yaw=rng.uniform(-90, 90))
            target = tuple(np.asarray(camera.pivot) + rng.uniform(-1.5, 1.5, size=3))
            if np.linalg.norm(np.asarray(target) - np.asarray(camera.pivot)) < 0.05:
                continue

            delta = camera_delta_to(camera, target)
            moved, _ = apply_head_delta(camera, delta, clamp=False)
            u, v, _ = project_point(moved, target)

            fx, fy, cx, cy = moved.intrinsics
            assert abs(u - cx) < 0.5
            assert abs(v - cy) < 0.5


def test_wrap_degrees_range():
    assert wrap_degrees(180.0) == 180.0
    assert wrap_degrees(-180.0) == 180.0
    assert wrap_degrees(190.0) == pytest.approx(-170.0)
    assert wrap_degrees(-190.0) == pytest.approx(170.0)


def test_intrinsics_for_default_optics(camera):
    fx, fy, cx, cy = camera.intrinsics

    assert fx == pytest.approx(24.0)
    assert fy == fx
    assert (cx, cy) == (24.0, 24.0)


def test_fov_outside_range_rejected():
    with pytest.raises(ValueError):
        CameraState(fov_h=170.0)


def test_pixel_rays_are_unit_and_centre_ray_is_forward(camera):
    rays = pixel_rays(camera)

    norms = np.linalg.norm(rays, axis=-1)
    assert np.max(np.abs(norms - 1.0)) < 1e-9
    np.testing.assert_allclose(rays[24, 24], [1.0, 0.0, 0.0])


def test_projection_of_point_behind_camera_is_none(camera):
    assert project_point(camera, (-1.0, 0.0, 1.25)) is None


def test_rotation_is_orthonormal():
    camera = CameraState(pitch=-35.0, yaw=20.0)
    rot = camera.rotation()

    np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-12)
    forward = rot[:, 0]
    assert forward[2] == pytest.approx(math.sin(math.radians(-35.0)))
