"""Tests for scene sampling, articulation and supports."""

import dataclasses
from collections import Counter

import numpy as np
import pytest

from active_manip.config import ROOM_TYPES, SceneConfig
from active_manip.errors import GenerationError
from active_manip.world.articulation import ArticulatedJoint, step_joint
from active_manip.world.scene import (
    Scene,
    aabb_overlap_volume,
    drive_container,
    sample_scene,
    support_below,
)
from tests.factories import make_cabinet, make_drawer, make_object, make_scene


class TestSampleScene:
    """Scenes are deterministic, physically plausible and well-formed."""

    def test_same_seed_gives_identical_scene(self):
        # Arrange
        config = SceneConfig()

        # Act
        first = sample_scene(config, seed=42)
        second = sample_scene(config, seed=42)

        # Assert
        assert first.to_canonical_text() == second.to_canonical_text()

    def test_different_seeds_differ(self):
        config = SceneConfig()

        assert sample_scene(config, 1).to_canonical_text() != sample_scene(config, 2).to_canonical_text()

    def test_fixed_object_count(self):
        config = SceneConfig(object_count=(3, 3))

        scene = sample_scene(config, seed=7)

        assert len(scene.objects) == 3
        assert [o.id for o in scene.objects] == ["obj0", "obj1", "obj2"]

    @pytest.mark.parametrize("seed", range(25))
    def test_objects_rest_on_supports_without_overlap(self, seed):
        # Act
        scene = sample_scene(SceneConfig(), seed=seed)

        # Assert
        supports = {s.name: s for s in scene.all_supports()}
        for obj in scene.objects:
            surface = supports[obj.support]
            assert surface.contains(obj.position[0], obj.position[1])
            assert obj.position[2] == pytest.approx(surface.height + obj.half_extents[2])
        for i, a in enumerate(scene.objects):
            for b in scene.objects[i + 1:]:
                assert aabb_overlap_volume(a.aabb(), b.aabb()) == 0.0

    @pytest.mark.parametrize("seed", range(25))
    def test_pivot_is_outside_every_object(self, seed):
        scene = sample_scene(SceneConfig(), seed=seed)

        pivot = np.asarray(scene.head_pivot)
        for obj in scene.objects:
            lo, hi = obj.aabb()
            assert not np.all((lo <= pivot) & (pivot <= hi))

    def test_holders_start_full(self):
        for seed in range(40):
            scene = sample_scene(SceneConfig(), seed=seed)
            for obj in scene.objects:
                assert obj.liquid_units in (0, obj.capacity)

    def test_excluded_categories_never_appear(self):
        config = SceneConfig(excluded_categories=("apple", "cup"))

        for seed in range(30):
            scene = sample_scene(config, seed=seed)
            assert not {o.category for o in scene.objects} & {"apple", "cup"}

    def test_required_category_is_placed(self):
        config = SceneConfig(required_categories=("teapot",))

        scene = sample_scene(config, seed=3)

        assert scene.objects[0].category == "teapot"

    def test_crowded_scene_raises_naming_object(self):
        config = SceneConfig(object_count=(200, 200), max_placement_attempts=20)

        with pytest.raises(GenerationError) as excinfo:
            sample_scene(config, seed=0)

        assert excinfo.value.object_id is not None
        assert excinfo.value.object_id in str(excinfo.value)

    def test_canonical_text_round_trips(self):
        scene = sample_scene(SceneConfig(container_count=(2, 2)), seed=9)

        restored = Scene.from_dict(scene.to_dict())

        assert restored.to_canonical_text() == scene.to_canonical_text()

    @pytest.mark.slow
    def test_room_frequencies_follow_configuration(self):
        # Arrange
        config = SceneConfig(object_count=(0, 0), container_count=(0, 0))
        n = 20_000

        # Act
        counts = Counter(sample_scene(config, seed).room_type for seed in range(n))

        # Assert
        for room in ROOM_TYPES:
            assert counts[room] / n == pytest.approx(config.room_probs[room], abs=0.015)


class TestJoints:
    """Joint stepping clamps to ``[0, limit]``."""

    def test_step_adds_delta(self):
        joint = ArticulatedJoint("revolute", 0.2, 1.75, (0.0, 0.0, 1.0))

        assert step_joint(joint, 0.17).value == pytest.approx(0.37)

    def test_step_clamps_at_zero(self):
        joint = ArticulatedJoint("prismatic", 0.1, 0.3, (-1.0, 0.0, 0.0))

        assert step_joint(joint, -1.0).value == 0.0

    def test_zero_delta_is_identity(self):
        joint = ArticulatedJoint("prismatic", 0.1, 0.3, (-1.0, 0.0, 0.0))

        assert step_joint(joint, 0.0) == joint

    def test_monotone_in_delta(self):
        joint = ArticulatedJoint("revolute", 0.9, 1.75, (0.0, 0.0, 1.0))
        deltas = np.linspace(-2.0, 2.0, 41)

        values = [step_joint(joint, d).value for d in deltas]

        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_value_outside_limits_rejected(self):
        with pytest.raises(ValueError):
            ArticulatedJoint("prismatic", 0.4, 0.3, (-1.0, 0.0, 0.0))


class TestContainers:
    """Handles, tangents and content transport."""

    def test_drawer_contents_travel_with_drawer(self):
        # Arrange
        drawer = make_drawer(value=0.0)
        surface = drawer.interior_surface()
        inner = make_object(
            "inner",
            category="sponge",
            position=(surface.center[0], surface.center[1], surface.height + 0.02),
            support=surface.name,
        )
        scene = make_scene([inner], [dataclasses.replace(drawer, interior_objects=("inner",))])

        # Act
        moved = drive_container(scene, drawer.id, 0.1)

        # Assert
        assert moved.container(drawer.id).joint.value == pytest.approx(0.1)
        assert moved.object("inner").position[0] == pytest.approx(inner.position[0] - 0.1)
        assert moved.object("inner").support == moved.container(drawer.id).interior_surface().name

    def test_drive_clamps_to_limit(self):
        scene = make_scene([], [make_drawer(value=0.25)])

        moved = drive_container(scene, "drawer0", 1.0)

        assert moved.container("drawer0").openness == 1.0

    @pytest.mark.parametrize("factory", [make_drawer, make_cabinet])
    def test_handle_tangent_matches_finite_difference(self, factory):
        container = factory(value=0.1)
        eps = 1e-6

        for value in (0.05, 0.1, 0.2):
            plus = np.asarray(container.handle_point(value + eps))
            minus = np.asarray(container.handle_point(value - eps))
            np.testing.assert_allclose((plus - minus) / (2 * eps), container.handle_tangent(value), atol=1e-6)

    @pytest.mark.parametrize("factory", [make_drawer, make_cabinet])
    def test_joint_delta_recovers_small_motion(self, factory):
        container = factory(value=0.1)

        displacement = 0.01 * container.handle_tangent()

        assert container.joint_delta_for(displacement) == pytest.approx(0.01)

    def test_cabinet_door_opens_towards_robot(self):
        closed = make_cabinet(value=0.0)
        opened = make_cabinet(value=1.5)

        assert opened.handle_point()[0] < closed.handle_point()[0]

    def test_cabinet_handle_sits_on_robot_side_of_door(self):
        cabinet = make_cabinet(value=0.0)

        assert cabinet.handle_point()[0] < cabinet.body_position[0]


class TestSupportBelow:
    def test_point_above_table(self):
        assert support_below(make_scene(), 0.44, 0.0, 0.8) == ("table", 0.72)

    def test_point_below_table_falls_to_floor(self):
        assert support_below(make_scene(), 0.44, 0.0, 0.5) == ("floor", 0.0)

    def test_point_off_every_surface(self):
        assert support_below(make_scene(), 2.0, 2.0, 1.0) == ("floor", 0.0)

    def test_open_drawer_interior_catches_objects(self):
        drawer = make_drawer(value=0.3)
        surface = drawer.interior_surface()
        scene = make_scene([], [drawer])

        name, height = support_below(scene, surface.center[0], surface.center[1], 0.6)

        assert name == surface.name
        assert height == pytest.approx(surface.height)
