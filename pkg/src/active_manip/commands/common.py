"""Helpers shared by the CLI commands: config resolution, snapshots and exit codes."""

from __future__ import annotations

import functools
import logging
from pathlib import Path
from typing import Any, Callable, Optional

import click

from ..config import PipelineConfig, RunConfig, load_config, resolve_out_dir, write_snapshot
from ..errors import ActiveManipError, ConfigError

logger = logging.getLogger(__name__)


def load_run(ctx: click.Context, command: str, out: Optional[str]) -> tuple[PipelineConfig, Optional[Path]]:
    """Resolve the config for ``command`` and snapshot it into ``out``.

    Returns the config and the resolved output directory (``None`` when the
    command writes nothing).

    Raises:
        ConfigError: on any invalid file entry or override.
    """
    obj = ctx.obj
    config = load_config(obj["config_path"], obj["overrides"])
    if out is None:
        return config, None
    out_dir = resolve_out_dir(out)
    run = RunConfig(
        command=command,
        config_path=obj["config_path"],
        seed=obj["seed"],
        out_dir=str(out_dir),
        overrides=list(obj["overrides"]),
        workers=obj["workers"],
    )
    snapshot = write_snapshot(out_dir, run, config)
    logger.debug(f"Wrote config snapshot to {snapshot}")
    return config, out_dir


def handle_errors(func: Callable[..., Any]) -> Callable[..., Any]:
    """Turn package errors into a message on stderr and the documented exit code."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except ConfigError as e:
            logger.error(f"Configuration error: {e}")
            for problem in e.problems:
                click.echo(f"config error: {problem}", err=True)
            raise SystemExit(e.exit_code) from e
        except ActiveManipError as e:
            logger.error(f"{type(e).__name__}: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
            click.echo(f"{type(e).__name__}: {e}", err=True)
            diagnostics = getattr(e, "diagnostics", None)
            if diagnostics:
                click.echo(f"diagnostics: {diagnostics}", err=True)
            raise SystemExit(e.exit_code) from e

    return wrapper


def checkpoint_option(required: bool = False):
    return click.option(
        "--checkpoint",
        type=click.Path(exists=True, dir_okay=False),
        required=required,
        default=None,
        help="Model checkpoint (.pt) to load.",
    )


def out_option(default: Optional[str] = None):
    return click.option(
        "--out",
        type=click.Path(file_okay=False),
        required=default is None,
        default=default,
        help="Output directory (relative paths land under $ACTIVE_MANIP_OUTPUT_ROOT when set).",
    )


views_option = click.option(
    "--views",
    type=click.Path(exists=True),
    required=True,
    help="View dataset directory or manifest written by gen-views.",
)

demos_option = click.option(
    "--demos",
    type=click.Path(exists=True),
    required=True,
    help="Demonstration directory written by gen-demos.",
)
