"""Transformer building blocks shared by the encoders and the action trunk."""

from __future__ import annotations

import math
from typing import Optional

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn

from .lora import LoRALinear


class Attention(nn.Module):
    """Multi-head attention with optional low-rank adapters on q, k, v and out.

    Args:
        width: Token width.
        heads: Number of heads; must divide ``width``.
        adapter_rank: Rank of the adapters; ``0`` builds plain linear maps.
        adapter_alpha: Adapter scale numerator.
        name: Prefix used in error messages.
    """

    def __init__(self, width: int, heads: int, adapter_rank: int = 0, adapter_alpha: float = 1.0, name: str = "attn"):
        super().__init__()
        if width % heads:
            raise ValueError(f"{name}: width {width} is not divisible by {heads} heads")
        self.heads = heads

        def proj(suffix: str) -> nn.Module:
            if adapter_rank > 0:
                return LoRALinear(width, width, adapter_rank, adapter_alpha, name=f"{name}.{suffix}")
            return nn.Linear(width, width)

        self.q = proj("q")
        self.k = proj("k")
        self.v = proj("v")
        self.out = proj("out")

    def forward(
        self,
        x: torch.Tensor,
        context: Optional[torch.Tensor] = None,
        key_mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        """Attend from ``x`` to ``context`` (``x`` itself when omitted).

        ``key_mask`` is ``(B, N_keys)`` with True for keys that may be attended.
        """
        context = x if context is None else context
        q = rearrange(self.q(x), "b n (h d) -> b h n d", h=self.heads)
        k = rearrange(self.k(context), "b n (h d) -> b h n d", h=self.heads)
        v = rearrange(self.v(context), "b n (h d) -> b h n d", h=self.heads)
        mask = None if key_mask is None else rearrange(key_mask, "b n -> b 1 1 n")
        attended = F.scaled_dot_product_attention(q, k, v, attn_mask=mask)
        return self.out(rearrange(attended, "b h n d -> b n (h d)"))


class Mlp(nn.Module):
    def __init__(self, width: int, hidden: int, out: Optional[int] = None):
        super().__init__()
        self.fc1 = nn.Linear(width, hidden)
        self.fc2 = nn.Linear(hidden, out or width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class EncoderBlock(nn.Module):
    """Pre-norm self-attention block; attention projections carry adapters."""

    def __init__(self, width: int, heads: int, mlp_ratio: int, adapter_rank: int, adapter_alpha: float, name: str):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = Attention(width, heads, adapter_rank, adapter_alpha, name=f"{name}.attn")
        self.norm2 = nn.LayerNorm(width)
        self.mlp = Mlp(width, width * mlp_ratio)

    def forward(self, x: torch.Tensor, key_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), key_mask=key_mask)
        return x + self.mlp(self.norm2(x))


class DiTBlock(nn.Module):
    """Self-attention over action tokens, then cross-attention to the context."""

    def __init__(self, width: int, heads: int, mlp_ratio: int, name: str):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.self_attn = Attention(width, heads, name=f"{name}.self_attn")
        self.norm2 = nn.LayerNorm(width)
        self.cross_attn = Attention(width, heads, name=f"{name}.cross_attn")
        self.norm3 = nn.LayerNorm(width)
        self.mlp = Mlp(width, width * mlp_ratio)

    def forward(
        self, x: torch.Tensor, context: torch.Tensor, context_mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        x = x + self.self_attn(self.norm1(x))
        x = x + self.cross_attn(self.norm2(x), context=context, key_mask=context_mask)
        return x + self.mlp(self.norm3(x))


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding of (possibly fractional) diffusion steps."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float64, device=t.device) / max(half, 1)
    )
    args = t.to(torch.float64)[:, None] * freqs[None]
    embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        embedding = torch.cat([embedding, torch.zeros_like(embedding[:, :1])], dim=-1)
    return embedding


class TimestepEmbedder(nn.Module):
    def __init__(self, width: int, frequency_dim: Optional[int] = None):
        super().__init__()
        self.frequency_dim = frequency_dim or width
        self.mlp = nn.Sequential(nn.Linear(self.frequency_dim, width), nn.SiLU(), nn.Linear(width, width))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        dtype = self.mlp[0].weight.dtype
        return self.mlp(timestep_embedding(t, self.frequency_dim).to(dtype))
