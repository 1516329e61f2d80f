"""Tests for optimal views, perturbation and ground-truth chunks."""

import itertools
import math

import numpy as np
import pytest

from active_manip.config import CameraConfig
from active_manip.errors import InfeasiblePerturbationError, RejectionError
from active_manip.viewgen.instruct import BoundTask
from active_manip.viewgen.templates import template
from active_manip.viewgen.views import (
    anchor_offset_px,
    make_gt_chunk,
    optimal_view,
    perturb_view,
)
from active_manip.world.render import render_view, unobstructed_count
from tests.factories import make_object, make_scene

PIVOT = np.array([0.0, 0.0, 1.25])


def _bound(scene, target_id, anchor):
    return BoundTask(template("pick.visual_centering"), scene, target_id=target_id, anchor=tuple(anchor))


def _point_at(pitch, yaw, distance=1.0):
    p, y = math.radians(pitch), math.radians(yaw)
    return PIVOT + distance * np.array([math.cos(p) * math.cos(y), math.cos(p) * math.sin(y), math.sin(p)])


class TestOptimalView:
    """The optimal view centres the task anchor from the zero pose."""

    def test_anchor_on_zero_axis(self):
        # Arrange
        apple = make_object("a", position=(1.0, 0.0, 1.25))
        scene = make_scene([apple])

        # Act
        camera = optimal_view(scene, _bound(scene, "a", apple.grasp_point))

        # Assert
        assert camera.pitch == pytest.approx(0.0, abs=1e-12)
        assert camera.yaw == pytest.approx(0.0, abs=1e-12)

    def test_anchor_bearing_within_limits_is_centred(self):
        # Arrange
        anchor = _point_at(20.0, -30.0)
        apple = make_object("a", position=tuple(anchor))
        scene = make_scene([apple])

        # Act
        camera = optimal_view(scene, _bound(scene, "a", anchor))

        # Assert
        assert camera.pitch == pytest.approx(20.0)
        assert camera.yaw == pytest.approx(-30.0)
        assert anchor_offset_px(camera, tuple(anchor)) < 0.5
        obs = render_view(scene, camera)
        _, _, cx, cy = camera.intrinsics
        assert obs.instance_ids[obs.instance_raster[int(cy), int(cx)]] == "a"

    def test_unreachable_pitch_is_rejected(self):
        anchor = _point_at(80.0, 0.0)
        scene = make_scene([make_object("a", position=tuple(anchor))])

        with pytest.raises(RejectionError) as excinfo:
            optimal_view(scene, _bound(scene, "a", anchor), CameraConfig(fov_h=30.0))

        assert excinfo.value.template_id == "pick.visual_centering"

    def test_target_behind_robot_is_rejected(self):
        anchor = _point_at(0.0, 180.0)
        scene = make_scene([make_object("a", position=tuple(anchor))])

        with pytest.raises(RejectionError):
            optimal_view(scene, _bound(scene, "a", anchor))

    def test_clamped_but_visible_anchor_is_accepted(self):
        anchor = _point_at(75.0, 0.0)
        scene = make_scene([make_object("a", position=tuple(anchor))])

        camera = optimal_view(scene, _bound(scene, "a", anchor))

        assert camera.pitch == 60.0
        assert anchor_offset_px(camera, tuple(anchor)) > 0.5


class TestPerturbView:
    """Start views satisfy the modality's visibility contract."""

    @pytest.fixture
    def setup(self):
        apple = make_object("a", position=(0.6, 0.1, 0.76), support="table")
        scene = make_scene([apple])
        optimal = optimal_view(scene, _bound(scene, "a", apple.grasp_point))
        return scene, optimal

    def test_zero_range_returns_optimal(self, setup):
        scene, optimal = setup

        initial = perturb_view(optimal, (0.0, 0.0), "visual_centering", 0, scene, "a")

        assert initial == optimal

    @pytest.mark.parametrize("seed", range(10))
    def test_visual_centering_keeps_target_in_view(self, setup, seed):
        scene, optimal = setup

        initial = perturb_view(optimal, (12.0, 12.0), "visual_centering", seed, scene, "a")

        assert render_view(scene, initial).pixel_count("a") >= 1
        assert abs(initial.pitch - optimal.pitch) <= 12.0
        assert abs(initial.yaw - optimal.yaw) <= 12.0

    @pytest.mark.parametrize("modality", ["spatial_directive", "common_sense"])
    @pytest.mark.parametrize("seed", range(5))
    def test_search_modalities_start_with_target_out_of_frame(self, setup, modality, seed):
        scene, optimal = setup

        initial = perturb_view(optimal, (60.0, 90.0), modality, seed, scene, "a")

        assert render_view(scene, initial).pixel_count("a") == 0
        assert unobstructed_count(scene, initial, "a") == 0
        assert initial.within_limits

    def test_infeasible_perturbation_raises(self, setup):
        scene, optimal = setup

        with pytest.raises(InfeasiblePerturbationError):
            perturb_view(optimal, (1.0, 1.0), "common_sense", 0, scene, "a", max_attempts=20)

    def test_same_seed_same_view(self, setup):
        scene, optimal = setup

        first = perturb_view(optimal, (60.0, 90.0), "common_sense", 7, scene, "a")
        second = perturb_view(optimal, (60.0, 90.0), "common_sense", 7, scene, "a")

        assert first == second


class TestMakeGtChunk:
    def test_uniform_split(self):
        chunk, saturated = make_gt_chunk((10.0, -6.0), 5, 6.0)

        np.testing.assert_allclose(chunk, np.tile([2.0, -1.2], (5, 1)))
        assert saturated is False

    def test_saturated_split(self):
        chunk, saturated = make_gt_chunk((60.0, 0.0), 5, 6.0)

        np.testing.assert_allclose(chunk, np.tile([6.0, 0.0], (5, 1)))
        assert saturated is True

    def test_sums_match_capped_totals(self):
        totals = np.linspace(-120.0, 120.0, 17)
        for total_pitch, total_yaw, k in itertools.product(totals, totals, (1, 4, 8)):
            chunk, _ = make_gt_chunk((total_pitch, total_yaw), k, 6.0)
            for axis, total in enumerate((total_pitch, total_yaw)):
                expected = math.copysign(min(abs(total), k * 6.0), total)
                assert chunk[:, axis].sum() == pytest.approx(expected, abs=1e-9)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            make_gt_chunk((1.0, 1.0), 0, 6.0)
        with pytest.raises(ValueError):
            make_gt_chunk((1.0, 1.0), 4, 0.0)
