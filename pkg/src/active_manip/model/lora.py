"""Low-rank camera adapter layers."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import DimensionError


def lora_forward(
    x: torch.Tensor,
    W0: torch.Tensor,
    A: torch.Tensor,
    B: torch.Tensor,
    alpha: float,
    r: int,
    bias: torch.Tensor | None = None,
    layer: str = "lora",
) -> torch.Tensor:
    """``W0 x + (alpha / r) B (A x)`` over the last axis of ``x``.

    Raises:
        DimensionError: if the matrices do not chain or ``r`` is not positive.
    """
    if r < 1:
        raise DimensionError(f"{layer}: adapter rank must be >= 1, got {r}", layer=layer)
    d_out, k_in = W0.shape
    if x.shape[-1] != k_in:
        raise DimensionError(f"{layer}: input width {x.shape[-1]} != {k_in}", layer=layer)
    if A.shape != (r, k_in) or B.shape != (d_out, r):
        raise DimensionError(
            f"{layer}: A {tuple(A.shape)} / B {tuple(B.shape)} do not match rank {r} and W0 {tuple(W0.shape)}",
            layer=layer,
        )
    return F.linear(x, W0, bias) + (alpha / r) * F.linear(F.linear(x, A), B)


class LoRALinear(nn.Module):
    """A frozen-able linear map with a switchable low-rank residual.

    ``weight``/``bias`` are the base weights; ``lora_A``/``lora_B`` the
    adapter pair. ``lora_B`` starts at zero so a fresh adapter is an exact
    no-op.
    """

    def __init__(self, in_features: int, out_features: int, rank: int, alpha: float, name: str = "lora"):
        super().__init__()
        if rank < 1:
            raise DimensionError(f"{name}: adapter rank must be >= 1, got {rank}", layer=name)
        self.name = name
        self.rank = rank
        self.alpha = float(alpha)
        self.enabled = True
        self.weight = nn.Parameter(torch.empty(out_features, in_features))
        self.bias = nn.Parameter(torch.zeros(out_features))
        self.lora_A = nn.Parameter(torch.empty(rank, in_features))
        self.lora_B = nn.Parameter(torch.zeros(out_features, rank))
        nn.init.kaiming_uniform_(self.weight, a=math.sqrt(5))
        nn.init.kaiming_uniform_(self.lora_A, a=math.sqrt(5))

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if not self.enabled:
            if x.shape[-1] != self.weight.shape[1]:
                raise DimensionError(
                    f"{self.name}: input width {x.shape[-1]} != {self.weight.shape[1]}", layer=self.name
                )
            return F.linear(x, self.weight, self.bias)
        return lora_forward(x, self.weight, self.lora_A, self.lora_B, self.alpha, self.rank, self.bias, self.name)

    def extra_repr(self) -> str:
        out_f, in_f = self.weight.shape
        return f"in={in_f}, out={out_f}, rank={self.rank}, alpha={self.alpha}"


def set_adapter_enabled(module: nn.Module, enabled: bool) -> None:
    for layer in module.modules():
        if isinstance(layer, LoRALinear):
            layer.enabled = enabled
