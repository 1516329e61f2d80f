"""Ablations: each one a single config edit, trained and evaluated like the baseline.

Every variant runs the same bottom-up pipeline (base pretraining, Stage 1,
Stage 2, unless the edit skips a stage) on the same views, demos and seeds,
then writes a perception and a manipulation report.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from ..config import PipelineConfig, config_diff
from ..errors import ConfigError
from ..model import ActivePolicy, ModelDims
from ..registry import Registry
from ..train import (
    DemoDataset,
    PerceptionDataset,
    PretrainDataset,
    mix_datasets,
    pretrain_base,
    train_stage1,
    train_stage2,
)
from .manipulation import ModelPolicy, eval_manipulation
from .perception import PolicyPredictor, eval_perception
from .report import EvalReport, merge_reports

logger = logging.getLogger(__name__)

BASELINE = "baseline"
ABLATION_SUMMARY = "ablation.json"

ABLATIONS = Registry("ablation")


@ABLATIONS.register("no_stage1", "Skip Stage-1 perception alignment")
def no_stage1(config: PipelineConfig) -> PipelineConfig:
    config.train.skip_stage1 = True
    return config


@ABLATIONS.register("no_stage2", "Evaluate the Stage-1 checkpoint directly")
def no_stage2(config: PipelineConfig) -> PipelineConfig:
    config.train.skip_stage2 = True
    return config


@ABLATIONS.register("unified_head", "One shared decoder emitting camera and body actions")
def unified_head(config: PipelineConfig) -> PipelineConfig:
    config.model.unified_head = True
    return config


@ABLATIONS.register("full_finetune_no_adapter", "No adapter; the base itself is trained")
def full_finetune_no_adapter(config: PipelineConfig) -> PipelineConfig:
    config.model.adapter_rank = 0
    config.train.base_trainable = True
    return config


@ABLATIONS.register("no_spatial_injection", "No spatial encoder or fusion")
def no_spatial_injection(config: PipelineConfig) -> PipelineConfig:
    config.model.spatial_injection = False
    return config


def ablation_config(config: PipelineConfig, name: str) -> PipelineConfig:
    """A copy of ``config`` with the named edit applied (``baseline``: none)."""
    edited = copy.deepcopy(config)
    if name == BASELINE:
        return edited
    if name not in ABLATIONS:
        raise ConfigError(f"Unknown ablation {name!r}; expected one of {', '.join(ABLATIONS.names())}")
    return ABLATIONS.call(name, edited)


@dataclass
class AblationResult:
    """One trained and evaluated variant."""

    name: str
    config: PipelineConfig
    changed: list[str]
    checkpoint: Optional[Path]
    reports: dict[str, EvalReport] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "fingerprint": self.config.fingerprint(),
            "changed": self.changed,
            "checkpoint": str(self.checkpoint) if self.checkpoint is not None else None,
            "reports": {protocol: report.to_dict() for protocol, report in sorted(self.reports.items())},
        }


def train_variant(config: PipelineConfig, views, demos, out_dir: str | Path) -> tuple[ActivePolicy, Path]:
    """Run the stages ``config`` asks for; returns the final policy and checkpoint."""
    out_dir = Path(out_dir)
    dims = ModelDims.from_config(config)
    wrist = config.model.wrist_view
    result = pretrain_base(PretrainDataset(views, dims, config.model.pretrain_grid, wrist=wrist), config, out_dir=out_dir / "pretrain")
    if not config.train.skip_stage1:
        result = train_stage1(views, config, base_checkpoint=result.checkpoint, out_dir=out_dir / "stage1")
    if not config.train.skip_stage2:
        mixture = mix_datasets(
            PerceptionDataset(views, dims, wrist=wrist),
            DemoDataset(demos, dims, wrist=wrist),
            config.train.mixture_ratio,
            seed=config.train.stage2.seed,
            batch_size=config.train.stage2.batch_size,
        )
        result = train_stage2(mixture, config, stage1_checkpoint=result.checkpoint, out_dir=out_dir / "stage2")
    return result.policy, result.checkpoint


def evaluate_variant(
    policy: ActivePolicy, config: PipelineConfig, views, seed: int, workers: int = 1
) -> dict[str, EvalReport]:
    ev = config.eval
    perception = eval_perception(PolicyPredictor(policy, config, seed), views, config, seed=seed)
    manipulation = eval_manipulation(
        ModelPolicy(policy, config),
        ev.tasks,
        ev.visibility,
        ev.camera_config,
        ev.n_episodes,
        seed,
        config,
        workers=workers,
        policy_name="model",
    )
    return {"perception": perception, "manipulation": manipulation}


def run_ablation(
    base_config: PipelineConfig,
    name: str,
    views,
    demos,
    out_dir: str | Path,
    seed: int,
    workers: int = 1,
) -> AblationResult:
    """Train and evaluate one variant under ``out_dir / name``.

    Raises:
        ConfigError: for an unknown ablation name.
    """
    config = ablation_config(base_config, name)
    changed = sorted(config_diff(base_config, config))
    variant_dir = Path(out_dir) / name
    logger.info(f"Ablation {name}: changed {', '.join(changed) or 'nothing'}")
    policy, checkpoint = train_variant(config, views, demos, variant_dir)
    reports = evaluate_variant(policy, config, views, seed, workers)
    for protocol, report in reports.items():
        report.meta["ablation"] = name
        report.write(variant_dir / protocol)
    return AblationResult(name, config, changed, checkpoint, reports)


def run_ablations(
    base_config: PipelineConfig,
    names: Sequence[str],
    views,
    demos,
    out_dir: str | Path,
    seed: int,
    workers: int = 1,
    include_baseline: bool = True,
) -> dict[str, AblationResult]:
    """Run the baseline and each named ablation on shared seeds.

    Writes per-protocol comparison reports under ``out_dir/summary`` and the
    per-variant config diffs to ``out_dir/ablation.json``.
    """
    for name in names:
        if name != BASELINE and name not in ABLATIONS:
            raise ConfigError(f"Unknown ablation {name!r}; expected one of {', '.join(ABLATIONS.names())}")
    order = ([BASELINE] if include_baseline else []) + [n for n in names if n != BASELINE]
    results = {name: run_ablation(base_config, name, views, demos, out_dir, seed, workers) for name in order}
    out_dir = Path(out_dir)
    for protocol, report in ablation_summary(results).items():
        report.write(out_dir / "summary" / protocol)
    summary = {name: {"fingerprint": r.config.fingerprint(), "changed": r.changed} for name, r in results.items()}
    (out_dir / ABLATION_SUMMARY).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return results


def ablation_summary(results: dict[str, AblationResult]) -> dict[str, EvalReport]:
    """One report per protocol with an ``ablation`` condition field."""
    protocols = sorted({p for r in results.values() for p in r.reports})
    return {
        protocol: merge_reports(
            f"ablation-{protocol}", {name: r.reports[protocol] for name, r in results.items()}, key="ablation"
        )
        for protocol in protocols
    }
