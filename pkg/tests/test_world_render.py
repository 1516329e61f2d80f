"""Tests for ray-cast observations."""

import numpy as np
import pytest

from active_manip.config import SceneConfig
from active_manip.world import catalog
from active_manip.world.camera import CameraState, project_point
from active_manip.world.render import (
    DEPTH_EMPTY,
    render,
    render_view,
    scene_primitives,
    unobstructed_count,
)
from active_manip.world.scene import sample_scene
from tests.factories import make_drawer, make_object, make_scene


class TestDepth:
    """Depth is the range along the unit ray to the nearest surface."""

    def test_box_on_axis_reports_near_face_distance(self, camera):
        # Arrange
        box = make_object("b", category="box", position=(1.0, 0.0, 1.25), size=0.08)
        near_face = 1.0 - box.half_extents[0]
        scene = make_scene([box])

        # Act
        obs = render_view(scene, camera)

        # Assert
        fx, fy, cx, cy = camera.intrinsics
        assert obs.depth_raster[int(cy), int(cx)] == pytest.approx(near_face, abs=1e-6)

    def test_object_behind_camera_is_invisible(self, camera):
        scene = make_scene([make_object("b", position=(-0.6, 0.0, 1.25))])

        obs = render_view(scene, camera)

        assert obs.pixel_count("b") == 0
        assert np.all(obs.depth_raster == DEPTH_EMPTY)

    def test_nearest_object_wins_like_a_per_object_depth_sort(self, camera):
        # Arrange
        near = make_object("near", category="apple", position=(0.6, 0.02, 1.2), size=0.04)
        far = make_object("far", category="box", position=(1.1, 0.0, 1.2), size=0.09)
        scene = make_scene([near, far])

        # Act
        obs = render_view(scene, camera)
        alone = {
            oid: render_view(scene, camera, exclude=tuple(o for o in ("near", "far") if o != oid))
            for oid in ("near", "far")
        }

        # Assert
        stacked = np.stack(
            [np.where(alone[oid].depth_raster > 0, alone[oid].depth_raster, np.inf) for oid in ("near", "far")]
        )
        expected_depth = stacked.min(axis=0)
        expected_depth[np.isinf(expected_depth)] = DEPTH_EMPTY
        np.testing.assert_allclose(obs.depth_raster, expected_depth, atol=1e-12)
        assert obs.pixel_count("near") > 0
        assert obs.pixel_count("far") < unobstructed_count(scene, camera, "far")

    def test_hits_project_back_to_their_pixel(self):
        # Arrange
        scene = sample_scene(SceneConfig(), seed=11)
        camera = CameraState(pitch=-35.0, yaw=5.0, pivot=scene.head_pivot)

        # Act
        obs = render_view(scene, camera)

        # Assert
        rot = camera.rotation()
        rows, cols = np.nonzero(obs.valid_mask)
        assert rows.size > 0
        for v, u in zip(rows, cols):
            point = np.asarray(camera.pivot) + obs.depth_raster[v, u] * (rot @ obs.ray_dirs[v, u])
            pu, pv, rng = project_point(camera, tuple(point))
            assert pu == pytest.approx(u, abs=1e-6)
            assert pv == pytest.approx(v, abs=1e-6)
            assert rng == pytest.approx(obs.depth_raster[v, u], abs=1e-6)


class TestSemantics:
    """Channel layout of the semantic raster."""

    def test_channel_sums_by_pixel_kind(self, camera):
        # Arrange
        drawer = make_drawer(value=0.0)
        apple = make_object("a", position=(0.8, 0.0, 1.1))
        scene = make_scene([apple], [drawer])
        looking_down = CameraState(pitch=-40.0)

        # Act
        obs = render_view(scene, looking_down)

        # Assert
        sums = obs.semantic_raster.sum(axis=-1)
        apple_mask = obs.instance_raster == obs.instance_ids.index("a")
        drawer_mask = obs.instance_raster == obs.instance_ids.index(drawer.id)
        assert apple_mask.any() and drawer_mask.any()
        assert np.all(sums[apple_mask] == 3.0)
        assert np.all(sums[drawer_mask] == 2.0)
        assert np.all(sums[~obs.valid_mask] == 0.0)
        assert obs.semantic_raster.shape[-1] == catalog.N_SEMANTIC_CHANNELS

    def test_category_channel_matches_object(self, camera):
        scene = make_scene([make_object("a", category="lemon", color="yellow", position=(0.8, 0.0, 1.25))])

        obs = render_view(scene, camera)

        fx, fy, cx, cy = camera.intrinsics
        pixel = obs.semantic_raster[int(cy), int(cx)]
        assert pixel[catalog.category_index("lemon")] == 1.0
        layout = catalog.semantic_channel_layout()
        assert pixel[layout["color"][0] + catalog.color_index("yellow")] == 1.0


class TestDrawerVisibilityGate:
    """Interior objects are drawn only once the drawer is open enough."""

    @pytest.mark.parametrize("value,visible", [(0.03, False), (0.06, True)])
    def test_gate(self, value, visible):
        # Arrange
        drawer = make_drawer(value=value)
        surface = drawer.interior_surface()
        inner = make_object(
            "inner",
            category="sponge",
            position=(surface.center[0], surface.center[1], surface.height + 0.02),
            support=surface.name,
        )
        drawer = make_drawer(value=value, interior=("inner",))
        scene = make_scene([inner], [drawer])

        # Act
        ids = [p.id for p in scene_primitives(scene)]

        # Assert
        assert drawer.openness == pytest.approx(value / 0.30)
        assert ("inner" in ids) is visible
        assert scene.is_hidden("inner") is not visible


def test_rendering_is_deterministic():
    scene = sample_scene(SceneConfig(), seed=5)
    camera = CameraState(pitch=-30.0, pivot=scene.head_pivot)

    first = render_view(scene, camera)
    second = render_view(scene, camera)

    np.testing.assert_array_equal(first.depth_raster, second.depth_raster)
    np.testing.assert_array_equal(first.semantic_raster, second.semantic_raster)


def test_wrist_view_requires_robot_state(camera):
    with pytest.raises(ValueError):
        render(make_scene(), camera, wrist=True)
