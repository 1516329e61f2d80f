"""The policy network and its named parameter groups."""

from __future__ import annotations

import hashlib
import logging
from typing import Iterable, Optional

import torch
from torch import nn

from ..errors import DimensionError, FreezeViolationError
from .actions import ActionNormalizer
from .encoders import BaseEncoder, Fusion, SpatialEncoder
from .inputs import ModelDims, ModelInputs
from .layers import DiTBlock, Mlp, TimestepEmbedder
from .lora import set_adapter_enabled

logger = logging.getLogger(__name__)

PARAMETER_GROUPS: tuple[str, ...] = (
    "base",
    "adapter",
    "spatial",
    "fusion",
    "shared_dit",
    "camera_head",
    "body_head",
)

_PREFIX_GROUPS = {
    "base": "base",
    "spatial": "spatial",
    "fusion": "fusion",
    "dit": "shared_dit",
    "camera_head": "camera_head",
    "body_head": "body_head",
}


def group_of(parameter_name: str) -> str:
    """Group owning a parameter; adapter pairs live inside base layers."""
    if ".lora_A" in parameter_name or ".lora_B" in parameter_name:
        return "adapter"
    prefix = parameter_name.split(".", 1)[0]
    try:
        return _PREFIX_GROUPS[prefix]
    except KeyError:
        raise KeyError(f"Parameter {parameter_name} belongs to no group") from None


class ActionTrunk(nn.Module):
    """Shared DiT trunk over ``k`` action tokens.

    Each token embeds one noisy action row plus its position; the diffusion
    step and proprioception are added to every token. Blocks alternate
    self-attention with cross-attention into the fused context.
    """

    def __init__(self, dims: ModelDims, config):
        super().__init__()
        width = config.width
        self.in_proj = nn.Linear(2 + dims.d_body, width)
        self.action_pos = nn.Parameter(torch.zeros(1, dims.horizon, width))
        self.time_embed = TimestepEmbedder(width)
        self.proprio_embed = nn.Linear(dims.proprio_dim, width)
        self.blocks = nn.ModuleList(
            DiTBlock(width, config.heads, config.mlp_ratio, name=f"dit.blocks.{i}") for i in range(config.dit_blocks)
        )
        self.norm = nn.LayerNorm(width)
        nn.init.normal_(self.action_pos, std=0.02)

    def forward(self, head, body, tau, proprio, context, context_mask=None) -> torch.Tensor:
        x = self.in_proj(torch.cat([head, body], dim=-1)) + self.action_pos
        cond = self.time_embed(tau) + self.proprio_embed(proprio)
        x = x + cond[:, None, :]
        for block in self.blocks:
            x = block(x, context, context_mask)
        return self.norm(x)


class ActivePolicy(nn.Module):
    """Base encoder with camera adapter, spatial encoder, fusion and action heads.

    Args:
        dims: Input and action dimensions.
        config: ``ModelConfig`` section.
    """

    def __init__(self, dims: ModelDims, config):
        super().__init__()
        self.dims = dims
        self.config = config
        width = config.width
        self.base = BaseEncoder(dims, config, wrist=config.wrist_view)
        if config.spatial_injection:
            self.spatial = SpatialEncoder(dims, config, wrist=config.wrist_view)
            self.fusion = Fusion(width, config.beta_init)
        else:
            self.spatial = None
            self.fusion = None
        self.dit = ActionTrunk(dims, config)
        if config.unified_head:
            self.camera_head = Mlp(width, width, 2 + dims.d_body)
            self.body_head = None
        else:
            self.camera_head = Mlp(width, width, 2)
            self.body_head = Mlp(width, width, dims.d_body)
        self.normalizer = ActionNormalizer(dims.d_body)
        self.adapter_enabled = True

    # Encoding

    def set_adapter(self, enabled: bool) -> None:
        self.adapter_enabled = enabled
        set_adapter_enabled(self.base, enabled)

    def encode_observation(
        self, inputs: ModelInputs, adapter_on: Optional[bool] = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """``phi_vlm`` and its key mask. ``adapter_on`` overrides the model-wide flag."""
        set_adapter_enabled(self.base, self.adapter_enabled if adapter_on is None else adapter_on)
        return self.base(inputs)

    def encode_spatial(self, inputs: ModelInputs) -> torch.Tensor:
        if self.spatial is None:
            raise DimensionError("Spatial injection is disabled for this model", layer="spatial")
        return self.spatial(inputs)

    def context(self, inputs: ModelInputs, adapter_on: Optional[bool] = None) -> tuple[torch.Tensor, torch.Tensor]:
        """Fused context tokens and mask used as cross-attention keys/values."""
        phi, mask = self.encode_observation(inputs, adapter_on)
        if self.fusion is None:
            return phi, mask
        return self.fusion(phi, self.encode_spatial(inputs)), mask

    # Denoising

    def predict_noise(
        self,
        head: torch.Tensor,
        body: torch.Tensor,
        tau: torch.Tensor,
        proprio: torch.Tensor,
        context: torch.Tensor,
        context_mask: Optional[torch.Tensor] = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Predicted noise ``(eps_head (B, k, 2), eps_body (B, k, D_BODY))``."""
        k, d_body = self.dims.horizon, self.dims.d_body
        b = context.shape[0]
        if tuple(head.shape) != (b, k, 2):
            raise DimensionError(f"head chunk: expected {(b, k, 2)}, got {tuple(head.shape)}", layer="dit.in_proj")
        if tuple(body.shape) != (b, k, d_body):
            raise DimensionError(f"body chunk: expected {(b, k, d_body)}, got {tuple(body.shape)}", layer="dit.in_proj")
        if tuple(proprio.shape) != (b, self.dims.proprio_dim):
            raise DimensionError(f"proprio: expected {(b, self.dims.proprio_dim)}, got {tuple(proprio.shape)}", layer="dit.proprio_embed")
        latent = self.dit(head, body, tau, proprio, context, context_mask)
        if self.body_head is None:
            out = self.camera_head(latent)
            return out[..., :2], out[..., 2:]
        return self.camera_head(latent), self.body_head(latent)

    # Parameter groups

    def parameter_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        groups: dict[str, list[tuple[str, nn.Parameter]]] = {g: [] for g in PARAMETER_GROUPS}
        for name, param in self.named_parameters():
            groups[group_of(name)].append((name, param))
        return groups

    def group_parameters(self, names: Iterable[str]) -> list[nn.Parameter]:
        groups = self.parameter_groups()
        return [p for g in names for _, p in groups[g]]

    def count_parameters(self, group: Optional[str] = None) -> int:
        if group is None:
            return sum(p.numel() for p in self.parameters())
        return sum(p.numel() for _, p in self.parameter_groups()[group])

    def set_trainable(self, groups: Iterable[str]) -> list[nn.Parameter]:
        """Enable gradients for ``groups`` only; returns the trainable tensors."""
        wanted = set(groups)
        unknown = wanted - set(PARAMETER_GROUPS)
        if unknown:
            raise KeyError(f"Unknown parameter groups: {sorted(unknown)}")
        trainable = []
        for group, members in self.parameter_groups().items():
            for _, param in members:
                param.requires_grad_(group in wanted)
                if group in wanted:
                    trainable.append(param)
        return trainable

    def group_checksum(self, group: str) -> str:
        """SHA-256 over the group's tensors in name order."""
        digest = hashlib.sha256()
        for name, param in sorted(self.parameter_groups()[group], key=lambda item: item[0]):
            digest.update(name.encode("utf-8"))
            digest.update(param.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()

    def checksums(self) -> dict[str, str]:
        return {g: self.group_checksum(g) for g in PARAMETER_GROUPS}

    def verify_frozen(self, expected: dict[str, str]) -> None:
        """Raise if any listed group no longer matches its recorded checksum."""
        changed = [g for g, digest in expected.items() if self.group_checksum(g) != digest]
        if changed:
            raise FreezeViolationError(
                f"Frozen parameter groups changed: {changed}", diagnostics={"groups": changed}
            )


def build_policy(config, dims: Optional[ModelDims] = None, seed: int = 0) -> ActivePolicy:
    """Build a freshly initialised policy for a ``PipelineConfig``."""
    dims = dims or ModelDims.from_config(config)
    torch.manual_seed(seed)
    policy = ActivePolicy(dims, config.model)
    logger.info(
        f"Built policy: {policy.count_parameters()} parameters "
        f"(base {policy.count_parameters('base')}, adapter {policy.count_parameters('adapter')})"
    )
    return policy
