"""Policy network: frozen base encoder with camera adapter, spatial fusion and
decoupled diffusion action heads."""

from .actions import ActionCaps, ActionChunk, ActionNormalizer
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .diffusion import (
    ActionTargets,
    LossTerms,
    SamplerConfig,
    denoising_loss,
    make_scheduler,
    sample_chunk,
    sample_chunks,
)
from .encoders import fuse_context
from .inputs import ModelDims, ModelInputs, blank_wrist_arrays, collate, observation_arrays, observation_inputs
from .lora import LoRALinear, lora_forward
from .policy import PARAMETER_GROUPS, ActivePolicy, build_policy, group_of

__all__ = [
    "ActionCaps",
    "ActionChunk",
    "ActionNormalizer",
    "ActionTargets",
    "ActivePolicy",
    "LoRALinear",
    "LossTerms",
    "ModelDims",
    "ModelInputs",
    "PARAMETER_GROUPS",
    "SamplerConfig",
    "blank_wrist_arrays",
    "build_policy",
    "collate",
    "denoising_loss",
    "fuse_context",
    "group_of",
    "load_checkpoint",
    "lora_forward",
    "make_scheduler",
    "observation_arrays",
    "observation_inputs",
    "read_checkpoint",
    "sample_chunk",
    "sample_chunks",
    "save_checkpoint",
]
