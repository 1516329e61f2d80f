"""Evaluation protocols: perception, manipulation, ablations and the generalization sweep."""

from .ablation import (
    ABLATIONS,
    BASELINE,
    AblationResult,
    ablation_config,
    ablation_summary,
    run_ablation,
    run_ablations,
    train_variant,
)
from .manipulation import (
    POLICIES,
    SWEEP_AXES,
    EpisodeJob,
    ModelPolicy,
    ObservationJitter,
    episode_jobs,
    eval_manipulation,
    generalization_sweep,
    run_eval_episode,
)
from .perception import (
    PREDICTORS,
    GroundTruthPredictor,
    PolicyPredictor,
    ZeroPredictor,
    eval_perception,
)
from .report import ConditionResult, EvalReport, find_reports, merge_reports, read_report, tally

__all__ = [
    "ABLATIONS",
    "AblationResult",
    "BASELINE",
    "ConditionResult",
    "EpisodeJob",
    "EvalReport",
    "GroundTruthPredictor",
    "ModelPolicy",
    "ObservationJitter",
    "POLICIES",
    "PREDICTORS",
    "PolicyPredictor",
    "SWEEP_AXES",
    "ZeroPredictor",
    "ablation_config",
    "ablation_summary",
    "episode_jobs",
    "eval_manipulation",
    "eval_perception",
    "find_reports",
    "generalization_sweep",
    "merge_reports",
    "read_report",
    "run_ablation",
    "run_ablations",
    "run_eval_episode",
    "tally",
    "train_variant",
]
