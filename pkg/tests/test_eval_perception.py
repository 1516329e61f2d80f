"""Tests for the closed-loop perception protocol."""

import dataclasses

import numpy as np
import pytest

from active_manip.errors import ConfigError, DimensionError
from active_manip.eval import PREDICTORS, GroundTruthPredictor, PolicyPredictor, ZeroPredictor, eval_perception
from active_manip.model import build_policy


class _FullTurn:
    """Always turns as far as the cap allows, whatever the record asks for."""

    name = "full_turn"

    def __init__(self, horizon, cap):
        self.steps = np.tile([cap, -cap], (horizon, 1))

    def predict(self, record, obs, camera, chunk):
        return self.steps


def _gt(config):
    return GroundTruthPredictor(config.viewgen.chunk_horizon, config.viewgen.per_step_cap)


class TestOraclePredictors:
    """Exactness and counting properties that hold for any dataset."""

    def test_ground_truth_closes_every_unsaturated_record(self, tiny_config, tiny_views):
        # Act
        report = eval_perception(_gt(tiny_config), tiny_views, tiny_config, tolerance=0.01, splits=None)

        # Assert
        unsaturated = [v for v in report.verdicts if not v["saturated"]]
        assert unsaturated
        assert all(v["verdict"] == "success" for v in unsaturated)

    def test_zero_motion_rate_counts_records_already_in_tolerance(self, tiny_config, tiny_views):
        # Arrange
        tolerance = 20.0

        # Act
        report = eval_perception(ZeroPredictor(tiny_config.viewgen.chunk_horizon), tiny_views, tiny_config, tolerance, splits=None)

        # Assert
        for result in report.results:
            records = [r for r in tiny_views.records if r.split == result.condition["split"]]
            within = sum(abs(r.total_delta[0]) <= tolerance and abs(r.total_delta[1]) <= tolerance for r in records)
            assert result.episodes == len(records)
            assert result.successes == within
        assert all(v["chunks"] == 1 for v in report.verdicts)

    def test_vacuous_tolerance_always_succeeds(self, tiny_config, tiny_views):
        predictor = _FullTurn(tiny_config.viewgen.chunk_horizon, tiny_config.viewgen.per_step_cap)

        report = eval_perception(predictor, tiny_views, tiny_config, tolerance=180.0, splits=None)

        assert all(r.rate == 1.0 for r in report.results)

    def test_clamped_motion_is_flagged_and_stops(self, tiny_config, tiny_views):
        predictor = _FullTurn(tiny_config.viewgen.chunk_horizon, tiny_config.viewgen.per_step_cap)

        report = eval_perception(predictor, tiny_views, tiny_config, max_chunks=40, splits=None)

        assert all(v["clamped"] for v in report.verdicts)
        assert all(v["chunks"] < 40 for v in report.verdicts)


class TestArguments:
    @pytest.mark.parametrize("kwargs", [{"tolerance": 0.0}, {"tolerance": -1.0}, {"max_chunks": 0}])
    def test_invalid_budgets_are_config_errors(self, tiny_config, tiny_views, kwargs):
        with pytest.raises(ConfigError):
            eval_perception(_gt(tiny_config), tiny_views, tiny_config, **kwargs)

    def test_split_filter(self, tiny_config, tiny_views):
        report = eval_perception(_gt(tiny_config), tiny_views, tiny_config, splits=("train",))

        assert {r.condition["split"] for r in report.results} <= {"train"}
        assert len(report.verdicts) == len(tiny_views.split("train"))

    def test_report_carries_protocol_facts(self, tiny_config, tiny_views):
        report = eval_perception(_gt(tiny_config), tiny_views, tiny_config, splits=None, seed=7)

        assert report.protocol == "perception"
        assert report.seeds == [7]
        assert report.fingerprint == tiny_config.fingerprint()
        assert report.meta == {"predictor": "ground_truth", "tolerance": 5.0, "max_chunks": 2}


class TestPolicyPredictor:
    def test_model_mismatch_is_a_dimension_error(self, tiny_config, tiny_views):
        # Arrange
        config = dataclasses.replace(tiny_config)
        config.world = dataclasses.replace(
            tiny_config.world, camera=dataclasses.replace(tiny_config.world.camera, raster=(32, 32))
        )
        predictor = PolicyPredictor(build_policy(config), config)

        # Act / Assert
        with pytest.raises(DimensionError):
            eval_perception(predictor, tiny_views, tiny_config, splits=None)

    def test_same_seed_gives_the_same_report(self, tiny_config, tiny_views):
        policy = build_policy(tiny_config)

        first = eval_perception(PolicyPredictor(policy, tiny_config, seed=3), tiny_views, tiny_config, splits=None)
        second = eval_perception(PolicyPredictor(policy, tiny_config, seed=3), tiny_views, tiny_config, splits=None)

        assert first.to_json() == second.to_json()
        assert first.verdicts == second.verdicts

    def test_never_drives_the_arm(self, tiny_config, tiny_views, mocker):
        arm_step = mocker.patch("active_manip.env.state.step")

        eval_perception(PolicyPredictor(build_policy(tiny_config), tiny_config), tiny_views, tiny_config, splits=None)

        arm_step.assert_not_called()


def test_registry_builds_the_reference_predictors(tiny_config):
    assert set(PREDICTORS.names()) == {"ground_truth", "zero", "model"}
    assert PREDICTORS.call("zero", tiny_config).name == "zero"
    with pytest.raises(ConfigError, match="checkpoint"):
        PREDICTORS.call("model", tiny_config)
