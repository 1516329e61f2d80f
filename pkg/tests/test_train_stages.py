"""Tests for the training stages: freeze contracts, loss accounting and resumption."""

import dataclasses

import pytest
import torch

from active_manip.errors import ConfigError, FreezeViolationError, NumericalFault
from active_manip.model import ModelDims, SamplerConfig, build_policy, load_checkpoint, read_checkpoint
from active_manip.train import (
    DemoDataset,
    PerceptionDataset,
    PretrainDataset,
    angular_error,
    mix_datasets,
    pretrain_base,
    read_train_log,
    run_stage,
    stage1_groups,
    stage2_groups,
    train_stage1,
    train_stage2,
)


def _changed(before, after):
    return {g for g in before if before[g] != after[g]}


def _mixture(config, views, demos, ratio=0.5):
    dims = ModelDims.from_config(config)
    return mix_datasets(
        PerceptionDataset(views, dims),
        DemoDataset(demos, dims),
        ratio,
        seed=config.train.stage2.seed,
        batch_size=config.train.stage2.batch_size,
    )


class TestGroupSelection:
    def test_stage1_defaults(self, tiny_config):
        assert set(stage1_groups(tiny_config.train)) == {"adapter", "shared_dit", "camera_head"}

    def test_full_finetune_swaps_adapter_for_base(self, tiny_config):
        tiny_config.train.base_trainable = True

        assert set(stage1_groups(tiny_config.train)) == {"base", "shared_dit", "camera_head"}

    def test_stage2_defaults_keep_adapter_and_base_frozen(self, tiny_config):
        groups = set(stage2_groups(tiny_config.train))

        assert groups == {"spatial", "fusion", "shared_dit", "camera_head", "body_head"}
        assert not groups & {"adapter", "base"}

    def test_stage2_flags(self, tiny_config):
        tiny_config.train.stage2_freeze_spatial = True
        assert "spatial" not in stage2_groups(tiny_config.train)

        tiny_config.train.stage2_decoders_only = True
        assert set(stage2_groups(tiny_config.train)) == {"camera_head", "body_head"}


class TestPretrainBase:
    def test_updates_only_the_base(self, tiny_config, tiny_views, tmp_path):
        # Arrange
        dims = ModelDims.from_config(tiny_config)
        dataset = PretrainDataset(tiny_views, dims, grid=tiny_config.model.pretrain_grid, splits=None)
        policy = build_policy(tiny_config, dims)
        before = policy.checksums()

        # Act
        result = pretrain_base(dataset, tiny_config, policy=policy, out_dir=tmp_path)

        # Assert
        assert _changed(before, policy.checksums()) == {"base"}
        assert result.frozen == {"base": policy.group_checksum("base")}
        assert read_checkpoint(tmp_path / "pretrain.pt")["extra"]["stage"] == "pretrain"
        assert (tmp_path / "pretrain_step000002.pt").exists()
        lines = read_train_log(tmp_path / "pretrain_log.jsonl")
        assert [line["step"] for line in lines] == [1, 2, 3, 4]
        assert all(0.0 <= line["accuracy"] <= 1.0 for line in lines)

    def test_grid_mismatch_is_a_config_error(self, tiny_config, tiny_views):
        dataset = PretrainDataset(tiny_views, ModelDims.from_config(tiny_config), grid=2, splits=None)

        with pytest.raises(ConfigError, match="pretrain_grid"):
            pretrain_base(dataset, tiny_config)


class TestStage1:
    """Stage 1 trains the camera path and leaves the base and body decoder alone."""

    def test_freeze_contract(self, tiny_config, tiny_views, tmp_path):
        # Arrange
        dims = ModelDims.from_config(tiny_config)
        base = pretrain_base(PretrainDataset(tiny_views, dims, grid=3, splits=None), tiny_config, out_dir=tmp_path / "pre")
        before = base.policy.checksums()

        # Act
        result = train_stage1(tiny_views, tiny_config, base_checkpoint=tmp_path / "pre" / "pretrain.pt", out_dir=tmp_path / "s1")

        # Assert
        after = result.policy.checksums()
        assert after["base"] == before["base"]
        assert after["body_head"] == before["body_head"]
        assert _changed(before, after) <= set(stage1_groups(tiny_config.train))
        assert after["adapter"] != before["adapter"]

    def test_head_objective_only(self, tiny_config, tiny_views, tmp_path):
        result = train_stage1(tiny_views, tiny_config, out_dir=tmp_path)

        lines = read_train_log(tmp_path / "stage1_log.jsonl")
        assert len(lines) == tiny_config.train.stage1.steps
        for line in lines:
            assert line["loss_body"] == 0.0
            assert line["loss"] == pytest.approx(line["loss_head"], rel=1e-6)
            assert set(line["checksums"]) >= {"base", "adapter", "body_head"}
        assert result.checkpoint == tmp_path / "stage1.pt"

    def test_zero_learning_rate_changes_nothing(self, tiny_config, tiny_views):
        # Arrange
        tiny_config.train.stage1 = dataclasses.replace(tiny_config.train.stage1, learning_rate=0.0)
        policy = build_policy(tiny_config, seed=tiny_config.train.stage1.seed)
        before = policy.checksums()

        # Act
        result = train_stage1(tiny_views, tiny_config)

        # Assert
        assert result.policy.checksums() == before

    def test_resumption_is_bitwise(self, tiny_config, tiny_views, tmp_path):
        # Arrange
        full = train_stage1(tiny_views, tiny_config, out_dir=tmp_path / "full")

        # Act
        resumed = train_stage1(
            tiny_views, tiny_config, out_dir=tmp_path / "resumed", resume=tmp_path / "full" / "stage1_step000002.pt"
        )

        # Assert
        assert resumed.policy.checksums() == full.policy.checksums()
        resumed_lines = read_train_log(tmp_path / "resumed" / "stage1_log.jsonl")
        full_lines = read_train_log(tmp_path / "full" / "stage1_log.jsonl")
        assert [line["step"] for line in resumed_lines] == [3, 4]
        assert resumed_lines == full_lines[2:]

    def test_angular_error_is_finite(self, tiny_config, tiny_views):
        dims = ModelDims.from_config(tiny_config)
        policy = build_policy(tiny_config, dims)

        error = angular_error(policy, PerceptionDataset(tiny_views, dims, splits=None), SamplerConfig(steps=2))

        assert 0.0 <= error < float("inf")


class TestStage2:
    def test_missing_stage1_checkpoint_is_a_config_error(self, tiny_config, tiny_views, tiny_demos):
        with pytest.raises(ConfigError, match="Stage-1 checkpoint"):
            train_stage2(_mixture(tiny_config, tiny_views, tiny_demos), tiny_config)

    def test_other_stage_checkpoint_is_a_config_error(self, tiny_config, tiny_views, tiny_demos, tmp_path):
        dims = ModelDims.from_config(tiny_config)
        pretrain_base(PretrainDataset(tiny_views, dims, grid=3, splits=None), tiny_config, out_dir=tmp_path)

        with pytest.raises(ConfigError, match="not a Stage-1 checkpoint"):
            train_stage2(_mixture(tiny_config, tiny_views, tiny_demos), tiny_config, stage1_checkpoint=tmp_path / "pretrain.pt")

    def test_skip_stage1_trains_from_scratch(self, tiny_config, tiny_views, tiny_demos):
        tiny_config.train.skip_stage1 = True

        result = train_stage2(_mixture(tiny_config, tiny_views, tiny_demos), tiny_config)

        assert result.steps == tiny_config.train.stage2.steps

    def test_freeze_contract_and_loss_accounting(self, tiny_config, tiny_views, tiny_demos, tmp_path):
        # Arrange
        train_stage1(tiny_views, tiny_config, out_dir=tmp_path / "s1")
        stage1, _ = load_checkpoint(tmp_path / "s1" / "stage1.pt")
        before = stage1.checksums()

        # Act
        result = train_stage2(
            _mixture(tiny_config, tiny_views, tiny_demos),
            tiny_config,
            stage1_checkpoint=tmp_path / "s1" / "stage1.pt",
            out_dir=tmp_path / "s2",
        )

        # Assert
        after = result.policy.checksums()
        assert after["adapter"] == before["adapter"]
        assert after["base"] == before["base"]
        assert _changed(before, after) <= set(stage2_groups(tiny_config.train))
        assert torch.equal(result.policy.normalizer.head_mean, stage1.normalizer.head_mean)
        for line in read_train_log(tmp_path / "s2" / "stage2_log.jsonl"):
            expected = 1.0 * line["loss_head"] + 10.0 * line["loss_body"]
            assert abs(line["loss"] - expected) <= 1e-9
        assert read_checkpoint(tmp_path / "s2" / "stage2.pt")["extra"]["frozen"]["adapter"] == before["adapter"]

    def test_decoders_only_keeps_the_trunk(self, tiny_config, tiny_views, tiny_demos, tmp_path):
        train_stage1(tiny_views, tiny_config, out_dir=tmp_path)
        tiny_config.train.stage2_decoders_only = True
        stage1, _ = load_checkpoint(tmp_path / "stage1.pt")

        result = train_stage2(_mixture(tiny_config, tiny_views, tiny_demos), tiny_config, stage1_checkpoint=tmp_path / "stage1.pt")

        assert result.policy.group_checksum("shared_dit") == stage1.group_checksum("shared_dit")
        assert result.policy.group_checksum("spatial") == stage1.group_checksum("spatial")


class TestRunStage:
    """The shared loop aborts on frozen-group mutation and non-finite losses."""

    def _policy(self, config):
        return build_policy(config, ModelDims.from_config(config))

    def test_mutating_a_frozen_group_aborts(self, tiny_config):
        # Arrange
        policy = self._policy(tiny_config)

        def loss_fn(step, generator):
            with torch.no_grad():
                policy.base.norm.weight.add_(1.0)
            loss = sum((p**2).sum() for p in policy.camera_head.parameters())
            return loss, {"loss": float(loss)}

        # Act / Assert
        with pytest.raises(FreezeViolationError, match="base"):
            run_stage(policy, "probe", tiny_config.train.stage1, tiny_config.train, ("camera_head",), loss_fn)

    def test_non_finite_loss_is_a_numerical_fault(self, tiny_config):
        policy = self._policy(tiny_config)

        def loss_fn(step, generator):
            loss = sum((p**2).sum() for p in policy.camera_head.parameters()) * float("nan")
            return loss, {"loss": float(loss)}

        with pytest.raises(NumericalFault) as excinfo:
            run_stage(policy, "probe", tiny_config.train.stage1, tiny_config.train, ("camera_head",), loss_fn)

        assert excinfo.value.diagnostics == {"stage": "probe", "step": 0}
