"""Training commands: base pretraining, Stage 1 and Stage 2."""

import logging
from typing import Optional

import click

from ..env import read_demos
from ..model import ModelDims
from ..train import DemoDataset, PerceptionDataset, PretrainDataset, StageResult, mix_datasets
from ..train import pretrain_base, train_stage1, train_stage2
from ..viewgen import read_dataset
from .common import checkpoint_option, demos_option, handle_errors, load_run, out_option, views_option

logger = logging.getLogger(__name__)

resume_option = click.option(
    "--resume",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Checkpoint of this stage to continue from.",
)


def _echo_result(result: StageResult) -> None:
    click.echo(f"{result.stage}: {result.steps} steps")
    if result.history:
        last = result.history[-1]
        shown = ", ".join(f"{k}={v:.6g}" for k, v in sorted(last.items()) if isinstance(v, float))
        click.echo(f"last log line: {shown}")
    if result.checkpoint is not None:
        click.echo(f"checkpoint: {result.checkpoint}")


@click.command("pretrain")
@views_option
@out_option()
@resume_option
@click.pass_context
@handle_errors
def pretrain(ctx: click.Context, views: str, out: str, resume: Optional[str]) -> None:
    """Pretrain the base encoder on grid-cell target localisation."""
    config, out_dir = load_run(ctx, "pretrain", out)
    dataset = read_dataset(views)
    dims = ModelDims.from_config(config)
    samples = PretrainDataset(dataset, dims, config.model.pretrain_grid, wrist=config.model.wrist_view)
    _echo_result(pretrain_base(samples, config, out_dir=out_dir, resume=resume))


@click.command("train-stage1")
@views_option
@checkpoint_option()
@out_option()
@resume_option
@click.pass_context
@handle_errors
def stage1(ctx: click.Context, views: str, checkpoint: Optional[str], out: str, resume: Optional[str]) -> None:
    """Stage 1: align the camera adapter on image-to-camera-motion records.

    ``--checkpoint`` is the pretrained base; without it the base starts
    from its initialisation.
    """
    config, out_dir = load_run(ctx, "train-stage1", out)
    _echo_result(train_stage1(read_dataset(views), config, base_checkpoint=checkpoint, out_dir=out_dir, resume=resume))


@click.command("train-stage2")
@views_option
@demos_option
@checkpoint_option()
@out_option()
@resume_option
@click.pass_context
@handle_errors
def stage2(
    ctx: click.Context, views: str, demos: str, checkpoint: Optional[str], out: str, resume: Optional[str]
) -> None:
    """Stage 2: fine-tune on demonstrations mixed with perception records.

    Needs the Stage-1 ``--checkpoint`` unless ``train.skip_stage1`` is set.
    """
    config, out_dir = load_run(ctx, "train-stage2", out)
    dims = ModelDims.from_config(config)
    wrist = config.model.wrist_view
    mixture = mix_datasets(
        PerceptionDataset(read_dataset(views), dims, wrist=wrist),
        DemoDataset(read_demos(demos), dims, wrist=wrist),
        config.train.mixture_ratio,
        seed=config.train.stage2.seed,
        batch_size=config.train.stage2.batch_size,
    )
    _echo_result(train_stage2(mixture, config, stage1_checkpoint=checkpoint, out_dir=out_dir, resume=resume))
