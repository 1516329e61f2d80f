"""The optimizer loop shared by every training stage."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

import torch
from tqdm import tqdm

from ..config import StageConfig, TrainConfig
from ..errors import DataError, NumericalFault
from ..model import PARAMETER_GROUPS, ActivePolicy, save_checkpoint
from .data import step_generator

logger = logging.getLogger(__name__)

# (step, generator) -> (loss to minimise, scalar values to log)
LossFn = Callable[[int, torch.Generator], tuple[torch.Tensor, dict[str, float]]]
ValidateFn = Callable[[ActivePolicy], dict[str, float]]


class TrainLog:
    """Append-only JSON-lines training log."""

    def __init__(self, path: Optional[str | Path], keep_before: Optional[int] = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict[str, Any]] = []
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if keep_before is None:
            self.path.write_text("", encoding="utf-8")
            return
        # Resuming: drop lines written after the checkpoint we resume from.
        kept = [r for r in read_train_log(self.path) if r["step"] <= keep_before] if self.path.exists() else []
        with open(self.path, "w", encoding="utf-8") as fh:
            for record in kept:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        self.records = kept

    def write(self, record: dict[str, Any]) -> None:
        self.records.append(record)
        if self.path is None:
            return
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_train_log(path: str | Path) -> list[dict[str, Any]]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"Cannot read training log {path}: {e}") from e
    try:
        return [json.loads(line) for line in lines if line.strip()]
    except json.JSONDecodeError as e:
        raise DataError(f"Training log {path} is not valid JSON lines: {e}") from e


@dataclass
class StageResult:
    """A trained policy and where its artifacts went."""

    stage: str
    policy: ActivePolicy
    steps: int
    checkpoint: Optional[Path] = None
    log_path: Optional[Path] = None
    history: list[dict[str, Any]] = field(default_factory=list)
    frozen: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "steps": self.steps,
            "checkpoint": str(self.checkpoint) if self.checkpoint else None,
            "log_path": str(self.log_path) if self.log_path else None,
            "frozen": dict(self.frozen),
            "final": self.history[-1] if self.history else None,
        }


def checkpoint_path(out_dir: Path, stage: str, step: Optional[int] = None) -> Path:
    if step is None:
        return out_dir / f"{stage}.pt"
    return out_dir / f"{stage}_step{step:06d}.pt"


def make_optimizer(params: list[torch.nn.Parameter], stage: StageConfig, train: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        params,
        lr=stage.learning_rate,
        betas=tuple(train.adam_betas),
        eps=train.adam_eps,
        weight_decay=stage.weight_decay,
    )


def run_stage(
    policy: ActivePolicy,
    stage: str,
    stage_config: StageConfig,
    train_config: TrainConfig,
    trainable: Iterable[str],
    loss_fn: LossFn,
    out_dir: Optional[str | Path] = None,
    validate: Optional[ValidateFn] = None,
    resume_payload: Optional[dict[str, Any]] = None,
) -> StageResult:
    """Optimise ``trainable`` groups for ``stage_config.steps`` steps.

    Groups outside ``trainable`` are checksummed up front and re-verified at
    every evaluation and checkpoint step.

    Args:
        policy: Model to train in place.
        stage: Stage name, used for file names and log lines.
        stage_config: Steps, batch size, learning rate and cadences.
        train_config: Optimizer constants and gradient clipping.
        trainable: Parameter groups to update.
        loss_fn: Loss for a step, given that step's generator.
        out_dir: Where the log and checkpoints go; nothing is written if None.
        validate: Extra metrics computed every ``eval_every`` steps.
        resume_payload: A checkpoint payload of this stage to continue from.

    Raises:
        NumericalFault: non-finite loss.
        FreezeViolationError: a frozen group changed.
    """
    trainable = tuple(trainable)
    params = policy.set_trainable(trainable)
    if not params:
        raise DataError(f"{stage}: groups {list(trainable)} hold no parameters")
    optimizer = make_optimizer(params, stage_config, train_config)
    frozen = {g: policy.group_checksum(g) for g in PARAMETER_GROUPS if g not in trainable}

    start = 0
    if resume_payload is not None:
        extra = resume_payload.get("extra", {})
        if extra.get("stage") != stage:
            raise DataError(f"Cannot resume {stage} from a {extra.get('stage')!r} checkpoint")
        start = int(extra["step"])
        optimizer.load_state_dict(extra["optimizer"])
        frozen = dict(extra.get("frozen", frozen))
        policy.verify_frozen(frozen)
        logger.info(f"Resuming {stage} at step {start}")

    out = Path(out_dir) if out_dir is not None else None
    log = TrainLog(out / f"{stage}_log.jsonl" if out else None, keep_before=start if resume_payload else None)
    last_checkpoint: Optional[Path] = None
    policy.train()
    logger.info(f"Training {stage}: groups {list(trainable)} for {stage_config.steps} steps from step {start}")

    for step in tqdm(range(start, stage_config.steps), desc=stage, disable=None):
        generator = step_generator(stage_config.seed, step)
        loss, values = loss_fn(step, generator)
        if not torch.isfinite(loss):
            logger.error(f"{stage}: non-finite loss at step {step}")
            raise NumericalFault(f"{stage}: loss became {float(loss)} at step {step}", diagnostics={"stage": stage, "step": step})
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        if train_config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(params, train_config.grad_clip)
        optimizer.step()

        done = step + 1
        record: dict[str, Any] = {
            "stage": stage,
            "step": done,
            "lr": optimizer.param_groups[0]["lr"],
            **values,
            "checksums": policy.checksums(),
        }
        evaluate = stage_config.eval_every > 0 and done % stage_config.eval_every == 0
        save = stage_config.checkpoint_every > 0 and done % stage_config.checkpoint_every == 0
        if evaluate or save or done == stage_config.steps:
            policy.verify_frozen(frozen)
        if evaluate and validate is not None:
            policy.eval()
            record.update(validate(policy))
            policy.train()
        log.write(record)
        logger.debug(f"{stage} step {done}: loss={values.get('loss')}")
        if out is not None and (save or done == stage_config.steps):
            extra = {"stage": stage, "step": done, "optimizer": optimizer.state_dict(), "frozen": frozen}
            last_checkpoint = save_checkpoint(checkpoint_path(out, stage, done), policy, extra)

    policy.verify_frozen(frozen)
    policy.eval()
    final = None
    if out is not None:
        extra = {"stage": stage, "step": stage_config.steps, "optimizer": optimizer.state_dict(), "frozen": frozen}
        final = save_checkpoint(checkpoint_path(out, stage), policy, extra)
    return StageResult(
        stage=stage,
        policy=policy,
        steps=stage_config.steps,
        checkpoint=final or last_checkpoint,
        log_path=log.path,
        history=log.records,
        frozen=frozen,
    )
