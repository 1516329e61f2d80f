"""Noise schedule, the decoupled denoising loss and chunk sampling.

The schedule is the squared-cosine variance schedule over
``model.diffusion_levels`` training steps; sampling uses DDIM over
``model.sampling_steps`` steps (``eta = 0`` when deterministic, ``1``
otherwise).
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from diffusers import DDIMScheduler

from ..errors import NumericalFault
from .actions import ActionCaps, ActionChunk
from .inputs import ModelInputs, observation_inputs
from .policy import ActivePolicy

logger = logging.getLogger(__name__)


def make_scheduler(levels: int) -> DDIMScheduler:
    return DDIMScheduler(
        num_train_timesteps=levels,
        beta_schedule="squaredcos_cap_v2",
        clip_sample=False,
        set_alpha_to_one=True,
        prediction_type="epsilon",
    )


@functools.lru_cache(maxsize=8)
def training_scheduler(levels: int) -> DDIMScheduler:
    """Shared schedule for the forward (noising) process; never stepped."""
    return make_scheduler(levels)


@dataclass
class ActionTargets:
    """Ground-truth chunks of a batch.

    ``body_mask`` is 0 for perception-only records, whose body targets are
    undefined.
    """

    head: torch.Tensor
    body: torch.Tensor
    body_mask: torch.Tensor


@dataclass
class LossTerms:
    """Weighted loss for ``backward`` and its detached parts for logging.

    The logged ``loss`` is recombined in double precision from the logged
    parts, so it equals ``lambda_head * loss_head + lambda_other * loss_body``
    exactly as floats.
    """

    total: torch.Tensor
    head: torch.Tensor
    body: torch.Tensor
    lambda_head: float = 1.0
    lambda_other: float = 0.0

    def to_dict(self) -> dict[str, float]:
        head = self.head.detach().item()
        body = self.body.detach().item()
        loss = self.lambda_head * head + self.lambda_other * body
        return {"loss": loss, "loss_head": head, "loss_body": body}


def _regress_outputs(policy: ActivePolicy, inputs: ModelInputs, context, mask, like_head, like_body):
    tau = torch.zeros(inputs.batch_size, dtype=torch.long)
    return policy.predict_noise(
        torch.zeros_like(like_head), torch.zeros_like(like_body), tau, inputs.proprio, context, mask
    )


def denoising_loss(
    policy: ActivePolicy,
    inputs: ModelInputs,
    targets: ActionTargets,
    lambda_head: float,
    lambda_other: float,
    generator: Optional[torch.Generator] = None,
    taus: Optional[torch.Tensor] = None,
    noise: Optional[tuple[torch.Tensor, torch.Tensor]] = None,
) -> LossTerms:
    """``lambda_head * MSE_head + lambda_other * masked MSE_body``.

    Args:
        policy: Model under training.
        inputs: Observation batch.
        targets: Ground-truth chunks in action units.
        lambda_head: Weight of the camera branch.
        lambda_other: Weight of the body branch.
        generator: Source of diffusion steps and noise.
        taus: Fixed diffusion steps, overriding the generator.
        noise: Fixed ``(eps_head, eps_body)``, overriding the generator.
    """
    head, body = policy.normalizer.normalize(targets.head, targets.body)
    context, mask = policy.context(inputs)
    if policy.config.objective == "regress":
        pred_head, pred_body = _regress_outputs(policy, inputs, context, mask, head, body)
        target_head, target_body = head, body
    else:
        b = head.shape[0]
        levels = policy.config.diffusion_levels
        if taus is None:
            taus = torch.randint(0, levels, (b,), generator=generator)
        if noise is None:
            noise = (
                torch.randn(head.shape, generator=generator, dtype=head.dtype),
                torch.randn(body.shape, generator=generator, dtype=body.dtype),
            )
        scheduler = training_scheduler(levels)
        noisy_head = scheduler.add_noise(head, noise[0], taus)
        noisy_body = scheduler.add_noise(body, noise[1], taus)
        pred_head, pred_body = policy.predict_noise(noisy_head, noisy_body, taus, inputs.proprio, context, mask)
        target_head, target_body = noise
    head_term = ((pred_head - target_head) ** 2).mean()
    per_sample = ((pred_body - target_body) ** 2).mean(dim=(1, 2))
    body_mask = targets.body_mask.to(per_sample.dtype)
    body_term = (per_sample * body_mask).sum() / body_mask.sum().clamp_min(1.0)
    total = lambda_head * head_term + lambda_other * body_term
    return LossTerms(
        total=total,
        head=head_term,
        body=body_term,
        lambda_head=float(lambda_head),
        lambda_other=float(lambda_other),
    )


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 16
    deterministic: bool = True
    seed: int = 0

    @classmethod
    def from_config(cls, model_config, seed: int = 0) -> "SamplerConfig":
        return cls(steps=model_config.sampling_steps, deterministic=model_config.deterministic_sampling, seed=seed)


def _check_finite(tensor: torch.Tensor, name: str, tau: int, step: int) -> None:
    if not torch.isfinite(tensor).all():
        diagnostics = {"tau": tau, "step": step, "tensor": name}
        logger.error(f"Non-finite values in {name} at step {step} (tau={tau})")
        raise NumericalFault(f"Non-finite {name} during sampling at step {step}", diagnostics=diagnostics)


@torch.no_grad()
def sample_chunks(
    policy: ActivePolicy,
    inputs: ModelInputs,
    sampler: SamplerConfig,
    caps: Optional[ActionCaps] = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Reverse diffusion for a batch; returns clipped ``(head, body)`` chunks.

    Raises:
        NumericalFault: on NaN/inf, with ``tau``, ``step`` and tensor name.
    """
    caps = caps or ActionCaps()
    dims = policy.dims
    b = inputs.batch_size
    dtype = next(policy.parameters()).dtype
    context, mask = policy.context(inputs)
    shape = (b, dims.horizon, 2 + dims.d_body)
    generator = torch.Generator().manual_seed(int(sampler.seed))
    if policy.config.objective == "regress":
        head, body = _regress_outputs(
            policy, inputs, context, mask, torch.zeros(b, dims.horizon, 2, dtype=dtype),
            torch.zeros(b, dims.horizon, dims.d_body, dtype=dtype),
        )
        _check_finite(head, "head", 0, 0)
        _check_finite(body, "body", 0, 0)
    else:
        scheduler = make_scheduler(policy.config.diffusion_levels)
        scheduler.set_timesteps(sampler.steps)
        eta = 0.0 if sampler.deterministic else 1.0
        sample = torch.randn(shape, generator=generator, dtype=dtype)
        for step, t in enumerate(scheduler.timesteps):
            tau = torch.full((b,), int(t), dtype=torch.long)
            eps_head, eps_body = policy.predict_noise(
                sample[..., :2], sample[..., 2:], tau, inputs.proprio, context, mask
            )
            _check_finite(eps_head, "eps_head", int(t), step)
            _check_finite(eps_body, "eps_body", int(t), step)
            eps = torch.cat([eps_head, eps_body], dim=-1)
            sample = scheduler.step(eps, t, sample, eta=eta, generator=generator).prev_sample
            _check_finite(sample, "sample", int(t), step)
        head, body = sample[..., :2], sample[..., 2:]
    head, body = policy.normalizer.denormalize(head, body)
    return caps.clip(head, body)


def sample_chunk(
    obs,
    tokens: Sequence[int],
    proprio,
    policy: ActivePolicy,
    sampler: SamplerConfig,
    caps: Optional[ActionCaps] = None,
) -> ActionChunk:
    """Sample one action chunk for a single observation and instruction."""
    inputs = observation_inputs(obs, tokens, proprio, policy.dims, wrist=policy.config.wrist_view)
    inputs = inputs.to(next(policy.parameters()).dtype)
    was_training = policy.training
    policy.eval()
    try:
        head, body = sample_chunks(policy, inputs, sampler, caps)
    finally:
        policy.train(was_training)
    return ActionChunk(head=head[0].double().numpy(), body=body[0].double().numpy())
