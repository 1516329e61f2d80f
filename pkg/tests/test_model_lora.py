import pytest
import torch

from active_manip.errors import DimensionError
from active_manip.model.lora import LoRALinear, lora_forward, set_adapter_enabled


class TestLoraForward:
    """The adapted forward pass adds a scaled low-rank term to the base map."""

    def test_worked_example(self):
        # Arrange
        W0 = torch.eye(2, dtype=torch.float64)
        A = torch.tensor([[1.0, 1.0]], dtype=torch.float64)
        B = torch.tensor([[1.0], [1.0]], dtype=torch.float64)
        x = torch.tensor([1.0, 0.0], dtype=torch.float64)

        # Act
        h = lora_forward(x, W0, A, B, alpha=2.0, r=1)

        # Assert
        torch.testing.assert_close(h, torch.tensor([3.0, 2.0], dtype=torch.float64))

    def test_zero_b_is_exactly_the_base_map(self):
        g = torch.Generator().manual_seed(0)
        W0, A = torch.randn(5, 3, generator=g), torch.randn(2, 3, generator=g)
        x = torch.randn(7, 3, generator=g)

        h = lora_forward(x, W0, A, torch.zeros(5, 2), alpha=8.0, r=2)

        assert torch.equal(h, x @ W0.T)

    def test_delta_is_linear_in_alpha(self):
        g = torch.Generator().manual_seed(1)
        W0, A, B = torch.randn(4, 3, generator=g), torch.randn(2, 3, generator=g), torch.randn(4, 2, generator=g)
        x = torch.randn(3, generator=g)
        base = x @ W0.T

        once = lora_forward(x, W0, A, B, alpha=1.5, r=2) - base
        twice = lora_forward(x, W0, A, B, alpha=3.0, r=2) - base

        torch.testing.assert_close(twice, 2 * once)

    def test_shape_mismatch_names_layer(self):
        with pytest.raises(DimensionError) as excinfo:
            lora_forward(torch.zeros(3), torch.zeros(4, 3), torch.zeros(2, 4), torch.zeros(4, 2), 1.0, 2, layer="q")

        assert excinfo.value.layer == "q"

    def test_rank_must_be_positive(self):
        with pytest.raises(DimensionError):
            lora_forward(torch.zeros(3), torch.zeros(4, 3), torch.zeros(0, 3), torch.zeros(4, 0), 1.0, 0)


class TestLoRALinear:
    def test_fresh_adapter_is_a_no_op(self):
        layer = LoRALinear(6, 4, rank=2, alpha=4.0)
        x = torch.randn(3, 6)

        on = layer(x)
        layer.enabled = False
        off = layer(x)

        assert torch.equal(on, off)

    def test_disabling_ignores_trained_adapter(self):
        layer = LoRALinear(6, 4, rank=2, alpha=4.0)
        with torch.no_grad():
            layer.lora_B.normal_()
        x = torch.randn(3, 6)

        set_adapter_enabled(layer, False)

        torch.testing.assert_close(layer(x), x @ layer.weight.T + layer.bias)

    def test_input_width_checked_when_disabled(self):
        layer = LoRALinear(6, 4, rank=2, alpha=4.0, name="probe")
        layer.enabled = False

        with pytest.raises(DimensionError, match="probe"):
            layer(torch.zeros(2, 5))
