"""Versioned checkpoint files holding named parameter groups."""

from __future__ import annotations

import logging
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Optional

import torch

from ..config import ModelConfig
from ..errors import DataError, DimensionError
from .inputs import ModelDims
from .policy import ActivePolicy

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "active-manip-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, policy: ActivePolicy, extra: Optional[dict[str, Any]] = None) -> Path:
    """Write dims, config, weights, normalizer and per-group checksums.

    ``extra`` is stored alongside (stage, step, optimizer state, ...); it
    must only hold tensors and plain Python values.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": policy.dims.to_dict(),
        "model_config": asdict(policy.config),
        "schedule": {"levels": policy.config.diffusion_levels, "beta_schedule": "squaredcos_cap_v2"},
        "state_dict": policy.state_dict(),
        "groups": {g: [name for name, _ in members] for g, members in policy.parameter_groups().items()},
        "checksums": policy.checksums(),
        "adapter_enabled": policy.adapter_enabled,
        "extra": extra or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    logger.info(f"Saved checkpoint to {path}")
    return path


def read_checkpoint(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Checkpoint {path} does not exist")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise DataError(f"Cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not a policy checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    return payload


def load_checkpoint(
    path: str | Path, expected_dims: Optional[ModelDims] = None
) -> tuple[ActivePolicy, dict[str, Any]]:
    """Rebuild the policy stored at ``path``.

    Raises:
        DataError: unreadable file or checksum mismatch after loading.
        DimensionError: stored dims differ from ``expected_dims``.
    """
    payload = read_checkpoint(path)
    dims = ModelDims.from_dict(payload["dims"])
    if expected_dims is not None and dims != expected_dims:
        raise DimensionError(f"Checkpoint dims {dims} do not match expected {expected_dims}", layer="checkpoint")
    known = {f.name for f in fields(ModelConfig)}
    model_config = ModelConfig(**{k: v for k, v in payload["model_config"].items() if k in known})
    policy = ActivePolicy(dims, model_config)
    try:
        policy.load_state_dict(payload["state_dict"])
    except RuntimeError as e:
        raise DimensionError(f"Checkpoint {path} does not fit the model: {e}", layer="checkpoint") from e
    policy.set_adapter(bool(payload.get("adapter_enabled", True)))
    mismatched = [g for g, digest in payload["checksums"].items() if policy.group_checksum(g) != digest]
    if mismatched:
        raise DataError(f"Checkpoint {path}: checksum mismatch in groups {mismatched}")
    logger.info(f"Loaded checkpoint {path}")
    return policy, payload
