"""Evaluation commands: perception, manipulation, sweeps, ablations and reports."""

import logging
from pathlib import Path
from typing import Optional

import click

from ..config import CAMERA_CONFIGS, VISIBILITY_MODES
from ..env import TASK_FAMILIES, read_demos
from ..errors import DataError
from ..eval import (
    ABLATIONS,
    POLICIES,
    PREDICTORS,
    SWEEP_AXES,
    EvalReport,
    eval_manipulation,
    eval_perception,
    find_reports,
    generalization_sweep,
    read_report,
    run_ablations,
)
from ..eval.perception import PERCEPTION_SPLITS
from ..viewgen import read_dataset
from ..viewgen.dataset import SPLITS
from .common import checkpoint_option, demos_option, handle_errors, load_run, out_option, views_option

logger = logging.getLogger(__name__)

TRAJECTORY_DIR = "trajectories"


def _tuple_or(values: tuple, fallback) -> tuple:
    return tuple(values) if values else tuple(fallback)


def _finish(report: EvalReport, out_dir: Path) -> None:
    report.write(out_dir)
    click.echo(report.to_markdown())
    click.echo(f"Wrote {report.protocol} report to {out_dir}")


def task_options(func):
    """``--task``, ``--visibility``, ``--camera`` and ``-n``; empty values fall back to ``eval.*``."""
    func = click.option("-n", "n_episodes", type=click.IntRange(min=1), default=None, help="Episodes per condition.")(func)
    func = click.option(
        "--camera",
        "cameras",
        type=click.Choice(CAMERA_CONFIGS),
        multiple=True,
        help="Camera configuration (repeatable).",
    )(func)
    func = click.option(
        "--visibility", type=click.Choice(VISIBILITY_MODES), multiple=True, help="Visibility mode (repeatable)."
    )(func)
    func = click.option("--task", "tasks", type=click.Choice(TASK_FAMILIES), multiple=True, help="Task family (repeatable).")(func)
    return func


@click.command("eval-perception")
@views_option
@click.option("--predictor", type=click.Choice(PREDICTORS.names()), default="model", show_default=True)
@checkpoint_option()
@click.option("--tolerance", type=float, default=None, help="Angular tolerance in degrees (default: eval.tolerance).")
@click.option("--max-chunks", type=click.IntRange(min=1), default=None, help="Chunk budget (default: eval.max_chunks).")
@click.option(
    "--split",
    "splits",
    type=click.Choice(SPLITS),
    multiple=True,
    help=f"Record split (repeatable; default: {', '.join(PERCEPTION_SPLITS)}).",
)
@out_option()
@click.pass_context
@handle_errors
def eval_perception_cmd(
    ctx: click.Context,
    views: str,
    predictor: str,
    checkpoint: Optional[str],
    tolerance: Optional[float],
    max_chunks: Optional[int],
    splits: tuple[str, ...],
    out: str,
) -> None:
    """Closed-loop perception success: head moves only, per split."""
    config, out_dir = load_run(ctx, "eval-perception", out)
    seed = ctx.obj["seed"]
    chosen = PREDICTORS.call(predictor, config, checkpoint=checkpoint, seed=seed)
    report = eval_perception(
        chosen,
        read_dataset(views),
        config,
        tolerance=tolerance,
        max_chunks=max_chunks,
        splits=_tuple_or(splits, PERCEPTION_SPLITS),
        seed=seed,
    )
    _finish(report, out_dir)


@click.command("eval-manip")
@click.option("--policy", type=click.Choice(POLICIES.names()), default="model", show_default=True)
@checkpoint_option()
@task_options
@click.option("--trajectories/--no-trajectories", default=False, help="Write per-episode trajectory logs.")
@out_option()
@click.pass_context
@handle_errors
def eval_manip(
    ctx: click.Context,
    policy: str,
    checkpoint: Optional[str],
    tasks: tuple[str, ...],
    visibility: tuple[str, ...],
    cameras: tuple[str, ...],
    n_episodes: Optional[int],
    trajectories: bool,
    out: str,
) -> None:
    """Closed-loop manipulation success over task x visibility x camera."""
    config, out_dir = load_run(ctx, "eval-manip", out)
    ev = config.eval
    report = eval_manipulation(
        POLICIES.call(policy, config, checkpoint=checkpoint),
        _tuple_or(tasks, ev.tasks),
        _tuple_or(visibility, ev.visibility),
        _tuple_or(cameras, (ev.camera_config,)),
        n_episodes or ev.n_episodes,
        ctx.obj["seed"],
        config,
        workers=ctx.obj["workers"],
        log_dir=out_dir / TRAJECTORY_DIR if trajectories else None,
        policy_name=policy,
    )
    _finish(report, out_dir)


@click.command("sweep")
@click.option(
    "--axis",
    "axes",
    type=click.Choice(SWEEP_AXES),
    multiple=True,
    help="Perturbation axis (repeatable; default: all).",
)
@click.option("--policy", type=click.Choice(POLICIES.names()), default="model", show_default=True)
@checkpoint_option()
@task_options
@click.option("--trajectories/--no-trajectories", default=False, help="Write per-episode trajectory logs.")
@out_option()
@click.pass_context
@handle_errors
def sweep(
    ctx: click.Context,
    axes: tuple[str, ...],
    policy: str,
    checkpoint: Optional[str],
    tasks: tuple[str, ...],
    visibility: tuple[str, ...],
    cameras: tuple[str, ...],
    n_episodes: Optional[int],
    trajectories: bool,
    out: str,
) -> None:
    """Generalization sweep: each perturbation axis next to the unperturbed tasks."""
    config, out_dir = load_run(ctx, "sweep", out)
    report = generalization_sweep(
        POLICIES.call(policy, config, checkpoint=checkpoint),
        _tuple_or(axes, SWEEP_AXES),
        config,
        ctx.obj["seed"],
        tasks=tasks or None,
        visibility=visibility or None,
        camera_config=cameras or None,
        n_episodes=n_episodes,
        workers=ctx.obj["workers"],
        log_dir=out_dir / TRAJECTORY_DIR if trajectories else None,
        policy_name=policy,
    )
    _finish(report, out_dir)


@click.command("ablate")
@views_option
@demos_option
@click.option(
    "--ablation",
    "names",
    type=click.Choice(ABLATIONS.names()),
    multiple=True,
    help="Ablation to run (repeatable; default: all).",
)
@click.option("--baseline/--no-baseline", default=True, help="Also train and evaluate the unablated model.")
@out_option()
@click.pass_context
@handle_errors
def ablate(ctx: click.Context, views: str, demos: str, names: tuple[str, ...], baseline: bool, out: str) -> None:
    """Train and evaluate each ablation on shared data and seeds."""
    config, out_dir = load_run(ctx, "ablate", out)
    results = run_ablations(
        config,
        _tuple_or(names, ABLATIONS.names()),
        read_dataset(views),
        read_demos(demos),
        out_dir,
        ctx.obj["seed"],
        workers=ctx.obj["workers"],
        include_baseline=baseline,
    )
    for name, result in results.items():
        rates = ", ".join(
            f"{protocol}={sum(r.successes for r in report.results)}/{sum(r.episodes for r in report.results)}"
            for protocol, report in sorted(result.reports.items())
        )
        click.echo(f"{name}: {rates}")
    click.echo(f"Wrote ablation reports to {out_dir}")


@click.command("report")
@click.argument("path", type=click.Path(exists=True, file_okay=False))
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["markdown", "json"], case_sensitive=False),
    default="markdown",
    help="Printed format: markdown (default) or json.",
)
@click.option(
    "--out",
    type=click.Path(file_okay=False),
    default=None,
    help="Write re-rendered reports here instead of in place.",
)
@click.pass_context
@handle_errors
def report(ctx: click.Context, path: str, fmt: str, out: Optional[str]) -> None:
    """Re-render summary.json, summary.md and results.csv from finished evaluation directories."""
    root = Path(path)
    _, out_dir = load_run(ctx, "report", out)
    found = find_reports(root)
    if not found:
        raise DataError(f"No evaluation reports under {root}")
    for directory in found:
        rendered = read_report(directory)
        target = out_dir / directory.relative_to(root) if out_dir is not None else directory
        rendered.write(target)
        logger.info(f"Re-rendered {directory} into {target}")
        click.echo(rendered.to_json() if fmt.lower() == "json" else rendered.to_markdown())
