import logging
from typing import Optional

import click
import torch
from dotenv import load_dotenv

from .commands import (
    ablate,
    eval_manip,
    eval_perception_cmd,
    gen_demos,
    gen_views,
    pretrain,
    report,
    stage1,
    stage2,
    sweep,
)
from .config import thread_hint
from .eval import ABLATIONS, POLICIES, PREDICTORS

load_dotenv()  # Load environment variables from .env file

logger = logging.getLogger(__name__)

NOISY_LOGGERS = ("torch", "diffusers")


def setup_logging(verbose: bool = False) -> None:
    """Configure Python logging for the CLI.

    The root logger goes to DEBUG when ``verbose`` is True and WARNING
    otherwise. Third-party loggers stay at WARNING either way.

    Args:
        verbose: Enable DEBUG-level logging when True.
    """
    log_level = logging.DEBUG if verbose else logging.WARNING

    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(funcName)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        force=True,  # Override any existing configuration
    )

    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    logger.debug(f"Logging configured with level: {logging.getLevelName(log_level)}")


@click.group()
@click.option(
    "--verbose",
    "-v",
    is_flag=True,
    help="Enable verbose logging (DEBUG level).",
)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="YAML config file layered over the shipped defaults.",
)
@click.option(
    "--override",
    "overrides",
    multiple=True,
    help="key=value override (repeatable); keys may be dotted or unique leaf names.",
)
@click.option("--seed", type=int, default=0, show_default=True, help="Root seed for the run.")
@click.option(
    "--workers",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="Worker processes for records and episodes; results do not depend on it.",
)
@click.pass_context
def cli(
    ctx: click.Context,
    verbose: bool,
    config_path: Optional[str],
    overrides: tuple[str, ...],
    seed: int,
    workers: int,
) -> None:
    """Active-camera manipulation: data generation, training and evaluation."""
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose
    ctx.obj["config_path"] = config_path
    ctx.obj["overrides"] = list(overrides)
    ctx.obj["seed"] = seed
    ctx.obj["workers"] = workers

    setup_logging(verbose=verbose)
    threads = thread_hint()
    if threads is not None:
        torch.set_num_threads(threads)
        logger.debug(f"Torch threads set to {threads}")
    logger.info(f"active-manip started (seed={seed}, workers={workers})")
    logger.debug(f"Overrides: {list(overrides)}")


@click.command("components")
def components() -> None:
    """List the registered policies, perception predictors and ablations."""
    for registry in (POLICIES, PREDICTORS, ABLATIONS):
        click.echo(f"{registry.kind}:")
        for entry in registry.describe_all():
            click.echo(f"  {entry['name']:<26} {entry['description']}")


cli.add_command(gen_views)
cli.add_command(gen_demos)
cli.add_command(pretrain)
cli.add_command(stage1)
cli.add_command(stage2)
cli.add_command(eval_perception_cmd)
cli.add_command(eval_manip)
cli.add_command(sweep)
cli.add_command(ablate)
cli.add_command(report)
cli.add_command(components)

if __name__ == "__main__":
    cli()
