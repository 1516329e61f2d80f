import dataclasses

import pytest
import torch

from active_manip.errors import DataError, DimensionError
from active_manip.model import ActivePolicy, load_checkpoint, read_checkpoint, save_checkpoint
from tests.factories import tiny_dims, tiny_model_config


@pytest.fixture
def policy():
    torch.manual_seed(0)
    policy = ActivePolicy(tiny_dims(), tiny_model_config(beta_init=0.25))
    with torch.no_grad():
        policy.normalizer.head_mean.fill_(1.5)
    return policy


class TestCheckpointRoundTrip:
    """Saving and loading keeps weights, groups and the normalizer."""

    def test_reload_restores_everything(self, tmp_path, policy):
        # Arrange
        path = tmp_path / "ckpt" / "stage1.pt"
        policy.set_adapter(False)

        # Act
        save_checkpoint(path, policy, extra={"stage": "stage1", "step": 12})
        loaded, payload = load_checkpoint(path, expected_dims=tiny_dims())

        # Assert
        assert loaded.checksums() == policy.checksums()
        assert loaded.config == policy.config
        assert loaded.adapter_enabled is False
        assert torch.equal(loaded.normalizer.head_mean, policy.normalizer.head_mean)
        assert payload["extra"] == {"stage": "stage1", "step": 12}
        assert payload["groups"]["fusion"] == ["fusion.beta", "fusion.linear.weight", "fusion.linear.bias"]

    def test_no_temporary_file_left(self, tmp_path, policy):
        save_checkpoint(tmp_path / "model.pt", policy)

        assert [p.name for p in tmp_path.iterdir()] == ["model.pt"]

    def test_dims_mismatch_is_a_hard_error(self, tmp_path, policy):
        path = save_checkpoint(tmp_path / "model.pt", policy)
        other = dataclasses.replace(tiny_dims(), raster=(8, 8))

        with pytest.raises(DimensionError):
            load_checkpoint(path, expected_dims=other)

    def test_tampered_checksum_raises(self, tmp_path, policy):
        path = save_checkpoint(tmp_path / "model.pt", policy)
        payload = read_checkpoint(path)
        payload["checksums"]["base"] = "0" * 64
        torch.save(payload, path)

        with pytest.raises(DataError, match="checksum"):
            load_checkpoint(path)


class TestReadCheckpoint:
    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="does not exist"):
            read_checkpoint(tmp_path / "absent.pt")

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "broken.pt"
        path.write_bytes(b"not a checkpoint")

        with pytest.raises(DataError, match="Cannot read"):
            read_checkpoint(path)

    def test_foreign_payload(self, tmp_path):
        path = tmp_path / "other.pt"
        torch.save({"weights": torch.zeros(2)}, path)

        with pytest.raises(DataError, match="not a policy checkpoint"):
            read_checkpoint(path)

    def test_unsupported_version(self, tmp_path, policy):
        path = save_checkpoint(tmp_path / "model.pt", policy)
        payload = read_checkpoint(path)
        payload["version"] = 99
        torch.save(payload, path)

        with pytest.raises(DataError, match="version"):
            read_checkpoint(path)
