from .data import gen_demos, gen_views
from .evaluate import ablate, eval_manip, eval_perception_cmd, report, sweep
from .training import pretrain, stage1, stage2

__all__ = [
    "ablate",
    "eval_manip",
    "eval_perception_cmd",
    "gen_demos",
    "gen_views",
    "pretrain",
    "report",
    "stage1",
    "stage2",
    "sweep",
]
