"""Action chunks, their bounds and the per-dimension normalizer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import torch
from torch import nn

from ..world.arm import D_BODY, N_ARM_JOINTS

# Lower bound on a normalizer scale, so constant dimensions stay finite.
MIN_SCALE = 1e-3


@dataclass(frozen=True)
class ActionChunk:
    """``k`` consecutive actions: head deltas in degrees, body joint deltas.

    Attributes:
        head: ``(k, 2)`` ``(dpitch, dyaw)`` per step.
        body: ``(k, D_BODY)`` arm joint deltas (radians) then gripper delta.
    """

    head: np.ndarray
    body: np.ndarray

    def __post_init__(self) -> None:
        head = np.asarray(self.head, dtype=np.float64)
        body = np.asarray(self.body, dtype=np.float64)
        if head.ndim != 2 or head.shape[1] != 2:
            raise ValueError(f"Head chunk must be (k, 2), got {head.shape}")
        if body.ndim != 2 or body.shape[0] != head.shape[0]:
            raise ValueError(f"Body chunk {body.shape} does not match head horizon {head.shape[0]}")
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "body", body)

    @property
    def horizon(self) -> int:
        return self.head.shape[0]

    @classmethod
    def head_only(cls, head: np.ndarray, d_body: int = D_BODY) -> "ActionChunk":
        head = np.asarray(head, dtype=np.float64)
        return cls(head=head, body=np.zeros((head.shape[0], d_body)))

    def to_dict(self) -> dict[str, Any]:
        return {"head": self.head.tolist(), "body": self.body.tolist()}


@dataclass(frozen=True)
class ActionCaps:
    """Per-step magnitude bounds applied to sampled chunks."""

    head: float = 6.0
    arm: float = 0.06
    gripper: float = 0.25

    @classmethod
    def from_config(cls, config) -> "ActionCaps":
        return cls(
            head=config.viewgen.per_step_cap,
            arm=config.env.arm_step_cap,
            gripper=config.env.gripper_step_cap,
        )

    def body_vector(self, d_body: int = D_BODY) -> np.ndarray:
        caps = np.full(d_body, self.arm)
        if d_body > N_ARM_JOINTS:
            caps[N_ARM_JOINTS:] = self.gripper
        return caps

    def clip(self, head: torch.Tensor, body: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        body_caps = torch.as_tensor(self.body_vector(body.shape[-1]), dtype=body.dtype, device=body.device)
        return head.clamp(-self.head, self.head), torch.maximum(torch.minimum(body, body_caps), -body_caps)


class ActionNormalizer(nn.Module):
    """Per-dimension affine maps fitted on training chunks, stored as buffers."""

    def __init__(self, d_body: int = D_BODY):
        super().__init__()
        self.register_buffer("head_mean", torch.zeros(2))
        self.register_buffer("head_scale", torch.ones(2))
        self.register_buffer("body_mean", torch.zeros(d_body))
        self.register_buffer("body_scale", torch.ones(d_body))

    @torch.no_grad()
    def fit(self, head: np.ndarray | None = None, body: np.ndarray | None = None) -> None:
        """Fit on stacked rows: ``head`` is ``(N, 2)``, ``body`` ``(M, D_BODY)``.

        A half passed as None (or empty) keeps its current statistics.
        """
        if head is not None and len(head):
            head = np.asarray(head, dtype=np.float64).reshape(-1, 2)
            self.head_mean.copy_(torch.as_tensor(head.mean(axis=0)))
            self.head_scale.copy_(torch.as_tensor(np.maximum(head.std(axis=0), MIN_SCALE)))
        if body is not None and len(body):
            body = np.asarray(body, dtype=np.float64).reshape(-1, self.body_mean.shape[0])
            self.body_mean.copy_(torch.as_tensor(body.mean(axis=0)))
            self.body_scale.copy_(torch.as_tensor(np.maximum(body.std(axis=0), MIN_SCALE)))

    def normalize(self, head: torch.Tensor, body: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return (head - self.head_mean) / self.head_scale, (body - self.body_mean) / self.body_scale

    def denormalize(self, head: torch.Tensor, body: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return head * self.head_scale + self.head_mean, body * self.body_scale + self.body_mean
