"""Model dimensions and conversion of observations into input tensors."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Optional, Sequence

import numpy as np
import torch

from ..errors import DimensionError
from ..viewgen.vocab import PAD_ID, default_vocabulary
from ..world import catalog
from ..world.arm import D_BODY, PROPRIO_DIM, ProprioState

# Depth values are divided by this before entering the geometric stream.
DEPTH_SCALE = 3.0
GLOBAL_DIM = 11


@dataclass(frozen=True)
class ModelDims:
    channels: int
    raster: tuple[int, int]
    vocab_size: int
    max_tokens: int
    horizon: int
    d_body: int = D_BODY
    proprio_dim: int = PROPRIO_DIM
    global_dim: int = GLOBAL_DIM

    @classmethod
    def from_config(cls, config) -> "ModelDims":
        return cls(
            channels=catalog.N_SEMANTIC_CHANNELS,
            raster=tuple(config.world.camera.raster),
            vocab_size=len(default_vocabulary()),
            max_tokens=config.viewgen.max_instruction_tokens,
            horizon=config.viewgen.chunk_horizon,
        )

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["raster"] = list(self.raster)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelDims":
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in data.items() if k in known}
        values["raster"] = tuple(values["raster"])
        return cls(**values)


@dataclass
class ModelInputs:
    """A batch of policy inputs.

    ``depth``, ``rays`` and ``globals_`` are optional geometric streams; a
    missing stream is replaced by a learned null embedding.
    """

    semantic: torch.Tensor
    tokens: torch.Tensor
    proprio: torch.Tensor
    depth: Optional[torch.Tensor] = None
    rays: Optional[torch.Tensor] = None
    globals_: Optional[torch.Tensor] = None
    wrist_semantic: Optional[torch.Tensor] = None
    wrist_depth: Optional[torch.Tensor] = None
    wrist_rays: Optional[torch.Tensor] = None

    @property
    def batch_size(self) -> int:
        return self.semantic.shape[0]

    def to(self, dtype: torch.dtype) -> "ModelInputs":
        def cast(t):
            if t is None or not torch.is_floating_point(t):
                return t
            return t.to(dtype)

        return ModelInputs(**{f.name: cast(getattr(self, f.name)) for f in fields(self)})


def global_features(intrinsics, camera_pose, raster: Sequence[int]) -> np.ndarray:
    """Intrinsics relative to the raster, sin/cos of the head angles, pivot."""
    fx, fy, cx, cy = intrinsics
    pitch, yaw, pivot = camera_pose
    h, w = raster
    p, y = math.radians(pitch), math.radians(yaw)
    return np.array(
        [fx / w, fy / h, cx / w, cy / h, math.sin(p), math.cos(p), math.sin(y), math.cos(y), *pivot],
        dtype=np.float32,
    )


def _view_arrays(obs) -> dict[str, np.ndarray]:
    return {
        "semantic": np.transpose(obs.semantic_raster, (2, 0, 1)).astype(np.float32),
        "depth": (np.asarray(obs.depth_raster, dtype=np.float32) / DEPTH_SCALE)[None],
        "rays": np.transpose(obs.ray_dirs, (2, 0, 1)).astype(np.float32),
    }


def token_array(tokens: Sequence[int], dims: ModelDims) -> np.ndarray:
    ids = list(tokens)
    if len(ids) > dims.max_tokens:
        raise DimensionError(f"{len(ids)} token ids exceed the model limit of {dims.max_tokens}", layer="token_embed")
    if any(t < 0 or t >= dims.vocab_size for t in ids):
        raise DimensionError(f"Token ids {ids} fall outside the vocabulary of {dims.vocab_size}", layer="token_embed")
    ids = ids + [PAD_ID] * (dims.max_tokens - len(ids))
    return np.asarray(ids, dtype=np.int64)


def observation_arrays(
    obs, tokens: Sequence[int], proprio: Optional[ProprioState], dims: ModelDims, wrist: bool = False
) -> dict[str, np.ndarray]:
    """Arrays for one sample; ``proprio=None`` gives the zero-state vector."""
    if tuple(obs.raster_dims) != tuple(dims.raster):
        raise DimensionError(f"Observation raster {obs.raster_dims} != model raster {dims.raster}", layer="patch_embed")
    arrays = _view_arrays(obs)
    arrays["tokens"] = token_array(tokens, dims)
    arrays["proprio"] = (
        proprio.as_vector().astype(np.float32) if proprio is not None else np.zeros(dims.proprio_dim, np.float32)
    )
    arrays["globals_"] = global_features(obs.intrinsics, obs.camera_pose, dims.raster)
    if wrist:
        if obs.wrist_observation is None:
            raise DimensionError("Model expects a wrist view but the observation has none", layer="wrist_patch_embed")
        for key, value in _view_arrays(obs.wrist_observation).items():
            arrays[f"wrist_{key}"] = value
    return arrays


def blank_wrist_arrays(arrays: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Fill the wrist slot with an empty view (for sources without a wrist camera)."""
    for key in ("semantic", "depth", "rays"):
        arrays[f"wrist_{key}"] = np.zeros_like(arrays[key])
    return arrays


def collate(samples: Sequence[dict[str, np.ndarray]]) -> ModelInputs:
    """Stack per-sample arrays into a batch."""
    if not samples:
        raise ValueError("Cannot collate an empty batch")
    keys = samples[0].keys()
    stacked = {k: torch.from_numpy(np.stack([s[k] for s in samples])) for k in keys}
    return ModelInputs(**stacked)


def observation_inputs(
    obs, tokens: Sequence[int], proprio: Optional[ProprioState], dims: ModelDims, wrist: bool = False
) -> ModelInputs:
    return collate([observation_arrays(obs, tokens, proprio, dims, wrist)])
