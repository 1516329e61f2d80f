"""Data generation commands: viewpoint records and oracle demonstrations."""

import logging

import click

from ..config import VISIBILITY_MODES
from ..env import TASK_FAMILIES, export_demos, generate_demos
from ..env.demos import LOW_YIELD
from ..viewgen import generate_dataset, write_dataset
from .common import handle_errors, load_run, out_option

logger = logging.getLogger(__name__)


@click.command("gen-views")
@click.option("-n", "n_records", type=click.IntRange(min=1), required=True, help="Number of records to generate.")
@out_option()
@click.pass_context
@handle_errors
def gen_views(ctx: click.Context, n_records: int, out: str) -> None:
    """Generate a viewpoint dataset (manifest + observation blob).

    Identical arguments and seed give byte-identical files for any
    ``--workers``.
    """
    config, out_dir = load_run(ctx, "gen-views", out)
    seed, workers = ctx.obj["seed"], ctx.obj["workers"]
    logger.info(f"gen-views: n={n_records} seed={seed} out={out_dir}")
    dataset = generate_dataset(n_records, config, seed, workers=workers)
    manifest, blob = write_dataset(dataset, out_dir)
    click.echo(f"Wrote {len(dataset.records)} records: {manifest} {blob}")


@click.command("gen-demos")
@click.option(
    "--task",
    "tasks",
    type=click.Choice(TASK_FAMILIES),
    multiple=True,
    default=("pick",),
    show_default=True,
    help="Task family (repeatable).",
)
@click.option(
    "--visibility",
    type=click.Choice(VISIBILITY_MODES),
    multiple=True,
    default=("unoccluded",),
    show_default=True,
    help="Visibility mode (repeatable); modes a family lacks are skipped.",
)
@click.option("-n", "n_per_task", type=click.IntRange(min=1), required=True, help="Episodes per task and mode.")
@out_option()
@click.pass_context
@handle_errors
def gen_demos(ctx: click.Context, tasks: tuple[str, ...], visibility: tuple[str, ...], n_per_task: int, out: str) -> None:
    """Run the scripted expert and keep its successful episodes as demonstrations."""
    config, out_dir = load_run(ctx, "gen-demos", out)
    seed, workers = ctx.obj["seed"], ctx.obj["workers"]
    collection = generate_demos(tasks, visibility, n_per_task, config, seed, workers=workers)
    manifest, _ = export_demos(collection, out_dir)
    for key, row in sorted(collection.yields.items()):
        marker = "  (low yield)" if row["yield"] < LOW_YIELD else ""
        click.echo(f"{key}: {row['successes']}/{row['attempted']} kept, {row['rejected']} rejected{marker}")
    click.echo(f"Wrote {len(collection.records)} demonstration records: {manifest}")
