"""Frozen base encoder, universal spatial encoder and context fusion."""

from __future__ import annotations

import logging
from typing import Optional

import torch
from einops import rearrange
from torch import nn

from ..errors import DimensionError
from ..viewgen.vocab import PAD_ID
from .inputs import ModelDims, ModelInputs
from .layers import EncoderBlock

logger = logging.getLogger(__name__)

# depth, three ray components and the depth-valid mask
GEO_INPUT_CHANNELS = 5


def _check_raster(name: str, tensor: torch.Tensor, channels: int, dims: ModelDims) -> None:
    expected = (channels, *dims.raster)
    if tensor.dim() != 4 or tuple(tensor.shape[1:]) != expected:
        raise DimensionError(f"{name}: expected (B, {expected}), got {tuple(tensor.shape)}", layer=name)


class BaseEncoder(nn.Module):
    """Patch and token embedder followed by adapter-carrying transformer blocks.

    Produces one token per visual patch (head view, then wrist view when
    enabled) followed by one token per instruction position.
    """

    def __init__(self, dims: ModelDims, config, wrist: bool = False):
        super().__init__()
        h, w = dims.raster
        if h % config.patch or w % config.patch:
            raise DimensionError(f"Raster {dims.raster} is not divisible by patch {config.patch}", layer="patch_embed")
        width = config.width
        self.dims = dims
        self.wrist = wrist
        self.n_patches = (h // config.patch) * (w // config.patch)
        self.patch_embed = nn.Conv2d(dims.channels, width, kernel_size=config.patch, stride=config.patch)
        self.visual_pos = nn.Parameter(torch.zeros(1, self.n_patches, width))
        self.view_embed = nn.Parameter(torch.zeros(2, width)) if wrist else None
        self.token_embed = nn.Embedding(dims.vocab_size, width)
        self.text_pos = nn.Parameter(torch.zeros(1, dims.max_tokens, width))
        self.blocks = nn.ModuleList(
            EncoderBlock(width, config.heads, config.mlp_ratio, config.adapter_rank, config.adapter_alpha, name=f"base.blocks.{i}")
            for i in range(config.base_blocks)
        )
        self.norm = nn.LayerNorm(width)
        self.classifier = nn.Linear(width, config.pretrain_grid**2 + 1)
        nn.init.normal_(self.visual_pos, std=0.02)
        nn.init.normal_(self.text_pos, std=0.02)
        if self.view_embed is not None:
            nn.init.normal_(self.view_embed, std=0.02)

    @property
    def n_visual(self) -> int:
        return self.n_patches * (2 if self.wrist else 1)

    def _patches(self, semantic: torch.Tensor, view: int) -> torch.Tensor:
        tokens = rearrange(self.patch_embed(semantic), "b d h w -> b (h w) d") + self.visual_pos
        if self.view_embed is not None:
            tokens = tokens + self.view_embed[view]
        return tokens

    def forward(self, inputs: ModelInputs) -> tuple[torch.Tensor, torch.Tensor]:
        """Return ``(phi, key_mask)``; ``key_mask`` is False at padded positions."""
        _check_raster("patch_embed", inputs.semantic, self.dims.channels, self.dims)
        tokens = inputs.tokens
        if tokens.shape[-1] != self.dims.max_tokens:
            raise DimensionError(f"token_embed: expected {self.dims.max_tokens} positions, got {tokens.shape[-1]}", layer="token_embed")
        if tokens.numel() and (int(tokens.max()) >= self.dims.vocab_size or int(tokens.min()) < 0):
            raise DimensionError(f"token_embed: token id outside vocabulary of {self.dims.vocab_size}", layer="token_embed")
        parts = [self._patches(inputs.semantic, 0)]
        if self.wrist:
            if inputs.wrist_semantic is None:
                raise DimensionError("wrist_patch_embed: wrist view missing", layer="wrist_patch_embed")
            _check_raster("wrist_patch_embed", inputs.wrist_semantic, self.dims.channels, self.dims)
            parts.append(self._patches(inputs.wrist_semantic, 1))
        parts.append(self.token_embed(tokens) + self.text_pos)
        x = torch.cat(parts, dim=1)
        b = x.shape[0]
        visual_mask = torch.ones(b, self.n_visual, dtype=torch.bool, device=x.device)
        key_mask = torch.cat([visual_mask, tokens != PAD_ID], dim=1)
        for block in self.blocks:
            x = block(x, key_mask=key_mask)
        return self.norm(x), key_mask

    def classify(self, phi: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        """Target-cell logits from the masked mean of the context tokens."""
        weights = key_mask.to(phi.dtype).unsqueeze(-1)
        pooled = (phi * weights).sum(dim=1) / weights.sum(dim=1).clamp_min(1.0)
        return self.classifier(pooled)


class SpatialEncoder(nn.Module):
    """Semantic patch features summed with projected geometry, then normalized.

    ``F_geo`` is a shallow convolution over depth and ray directions plus a
    broadcast MLP encoding of intrinsics and head pose.
    """

    def __init__(self, dims: ModelDims, config, wrist: bool = False):
        super().__init__()
        width = config.width
        self.dims = dims
        self.wrist = wrist
        self.rgb_embed = nn.Conv2d(dims.channels, width, kernel_size=config.patch, stride=config.patch)
        self.geo_conv = nn.Sequential(
            nn.Conv2d(GEO_INPUT_CHANNELS, config.geo_channels, kernel_size=3, padding=1),
            nn.GELU(),
            nn.Conv2d(config.geo_channels, width, kernel_size=config.patch, stride=config.patch),
        )
        layers: list[nn.Module] = [nn.Linear(dims.global_dim, width)]
        for _ in range(config.global_mlp_layers - 1):
            layers += [nn.GELU(), nn.Linear(width, width)]
        self.global_mlp = nn.Sequential(*layers)
        self.null_local = nn.Parameter(torch.zeros(width))
        self.null_global = nn.Parameter(torch.zeros(width))
        self.proj = nn.Linear(width, width)
        self.norm = nn.LayerNorm(width)
        nn.init.normal_(self.null_local, std=0.02)
        nn.init.normal_(self.null_global, std=0.02)

    def _local(self, depth: Optional[torch.Tensor], rays: Optional[torch.Tensor], n_tokens: int, b: int) -> torch.Tensor:
        null = self.null_local.expand(b, n_tokens, -1)
        if depth is None or rays is None:
            return null
        _check_raster("geo_conv.depth", depth, 1, self.dims)
        _check_raster("geo_conv.rays", rays, 3, self.dims)
        valid = (depth > 0).to(depth.dtype)
        features = rearrange(self.geo_conv(torch.cat([depth, rays, valid], dim=1)), "b d h w -> b (h w) d")
        has_depth = valid.flatten(1).any(dim=1)[:, None, None]
        return torch.where(has_depth, features, null)

    def _view(self, semantic, depth, rays, global_part) -> torch.Tensor:
        _check_raster("rgb_embed", semantic, self.dims.channels, self.dims)
        rgb = rearrange(self.rgb_embed(semantic), "b d h w -> b (h w) d")
        geo = self._local(depth, rays, rgb.shape[1], rgb.shape[0]) + global_part
        return self.norm(rgb + self.proj(geo))

    def forward(self, inputs: ModelInputs) -> torch.Tensor:
        b = inputs.batch_size
        if inputs.globals_ is not None:
            global_part = self.global_mlp(inputs.globals_)[:, None, :]
        else:
            global_part = self.null_global.expand(b, 1, -1)
        views = [self._view(inputs.semantic, inputs.depth, inputs.rays, global_part)]
        if self.wrist:
            views.append(self._view(inputs.wrist_semantic, inputs.wrist_depth, inputs.wrist_rays, global_part))
        return torch.cat(views, dim=1)


class Fusion(nn.Module):
    """``phi + beta * Linear(F_spatial)`` on the visual positions only."""

    def __init__(self, width: int, beta_init: float):
        super().__init__()
        self.beta = nn.Parameter(torch.tensor(float(beta_init)))
        self.linear = nn.Linear(width, width)

    def forward(self, phi: torch.Tensor, spatial: torch.Tensor) -> torch.Tensor:
        return fuse_context(phi, spatial, self.beta, self.linear)


def fuse_context(phi: torch.Tensor, spatial: torch.Tensor, beta: torch.Tensor, linear: nn.Module) -> torch.Tensor:
    """Add projected spatial tokens to the leading (visual) context positions.

    Raises:
        DimensionError: if there are more spatial tokens than context tokens
            or the projection width differs from the token width.
    """
    projected = linear(spatial)
    b, n, width = phi.shape
    if projected.shape[0] != b or projected.shape[-1] != width or projected.shape[1] > n:
        raise DimensionError(
            f"fusion: spatial tokens {tuple(projected.shape)} cannot align with context {tuple(phi.shape)}",
            layer="fusion",
        )
    padding = projected.new_zeros(b, n - projected.shape[1], width)
    return phi + beta * torch.cat([projected, padding], dim=1)
