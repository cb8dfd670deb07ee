"""Operator command line for the relabeling pipeline.

Typical run:

    relabelkit make-fixture --out fixture --seed 7
    relabelkit ingest --store run --catalog fixture/catalog.jsonl \\
        --images fixture/images.jsonl --predictions fixture/predictions.jsonl \\
        --reference-labels fixture/reference_labels.jsonl
    relabelkit select-model --store run
    relabelkit propose --store run --k 20
    relabelkit make-batches --store run --roster fixture/roster.jsonl --seed 7
    relabelkit simulate-annotations --store run --truth fixture/truth.jsonl --stage initial
    relabelkit analyze-agreement --store run
    relabelkit assign-refinement --store run
    relabelkit simulate-annotations --store run --truth fixture/truth.jsonl --stage refinement
    relabelkit finalize --store run
    relabelkit simulate-annotations --store run --truth fixture/truth.jsonl --stage triage
    relabelkit report --store run

`serve` hosts the annotator HTTP API instead of the simulate step.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import fixture as fixture_mod
from . import pipeline
from .errors import RelabelKitError
from .store import DatasetStore


def _echo_result(result: dict) -> None:
    click.echo(json.dumps(result, indent=2, sort_keys=True))


def _run(fn, *args, **kwargs):
    try:
        result = fn(*args, **kwargs)
    except RelabelKitError as exc:
        raise click.ClickException(str(exc)) from exc
    _echo_result(result)


store_option = click.option(
    "--store",
    "store_dir",
    type=click.Path(path_type=Path),
    default=Path("store"),
    show_default=True,
    help="Run directory holding the canonical store.",
)
force_option = click.option(
    "--force", is_flag=True, help="Re-run a stage that already completed."
)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Upgrade a single-label dataset to multi-label ground truth."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command("make-fixture")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--images", "n_images", type=int, default=200, show_default=True)
@click.option("--classes", "n_classes", type=int, default=10, show_default=True)
@click.option("--models", "n_models", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--extra-label-rate", type=float, default=0.35, show_default=True)
@click.option("--zero-label-rate", type=float, default=0.04, show_default=True)
def make_fixture_cmd(out_dir, n_images, n_classes, n_models, seed, extra_label_rate, zero_label_rate):
    """Generate a synthetic dataset for demos and acceptance runs."""
    _run(
        fixture_mod.make_fixture,
        out_dir,
        n_images=n_images,
        n_classes=n_classes,
        n_models=n_models,
        seed=seed,
        extra_label_rate=extra_label_rate,
        zero_label_rate=zero_label_rate,
    )


@main.command()
@store_option
@click.option("--catalog", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--images", type=click.Path(exists=True, path_type=Path), required=True)
@click.option(
    "--predictions",
    type=click.Path(exists=True, path_type=Path),
    multiple=True,
    required=True,
    help="Prediction files; repeatable.",
)
@click.option("--reference-labels", type=click.Path(exists=True, path_type=Path))
@force_option
def ingest(store_dir, catalog, images, predictions, reference_labels, force):
    """Load catalog, image registry, predictions and reference labels."""
    _run(
        pipeline.stage_ingest,
        DatasetStore(store_dir),
        catalog,
        images,
        list(predictions),
        reference_labels,
        force=force,
    )


@main.command("select-model")
@store_option
@click.option("--count-empty-as-wrong", is_flag=True, help="Keep zero-label images in the denominator.")
@force_option
def select_model_cmd(store_dir, count_empty_as_wrong, force):
    """Pick the proposal model by multi-label accuracy on the reference labels."""
    _run(
        pipeline.stage_select_model,
        DatasetStore(store_dir),
        count_empty_as_wrong=count_empty_as_wrong,
        force=force,
    )


@main.command()
@store_option
@click.option("--k", type=int, default=20, show_default=True, help="Proposals per image.")
@click.option("--model", "model_id", default=None, help="Override the selected model.")
@force_option
def propose(store_dir, k, model_id, force):
    """Generate the ranked label proposals for every image."""
    _run(pipeline.stage_propose, DatasetStore(store_dir), k=k, model_id=model_id, force=force)


@main.command("make-batches")
@store_option
@click.option("--roster", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--num-batches", type=int, default=7, show_default=True)
@click.option("--per-batch", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@force_option
def make_batches_cmd(store_dir, roster, num_batches, per_batch, seed, force):
    """Partition images into batches and open initial annotation."""
    _run(
        pipeline.stage_make_batches,
        DatasetStore(store_dir),
        roster,
        num_batches=num_batches,
        per_batch=per_batch,
        seed=seed,
        force=force,
    )


@main.command("simulate-annotations")
@store_option
@click.option("--truth", type=click.Path(exists=True, path_type=Path), required=True)
@click.option(
    "--stage",
    type=click.Choice(["initial", "refinement", "triage"]),
    required=True,
)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--drop-rate", type=float, default=0.08, show_default=True)
@click.option("--add-rate", type=float, default=0.05, show_default=True)
def simulate_annotations(store_dir, truth, stage, seed, drop_rate, add_rate):
    """Submit scripted annotator behavior (demo and acceptance runs)."""
    _run(
        fixture_mod.simulate_stage,
        DatasetStore(store_dir),
        truth,
        stage,
        seed=seed,
        drop_rate=drop_rate,
        add_rate=add_rate,
    )


@main.command("analyze-agreement")
@store_option
@force_option
def analyze_agreement_cmd(store_dir, force):
    """Apply the agreement condition and build the refinement queue."""
    _run(pipeline.stage_analyze_agreement, DatasetStore(store_dir), force=force)


@main.command("assign-refinement")
@store_option
@force_option
def assign_refinement_cmd(store_dir, force):
    """Split the refinement queue across experienced annotators."""
    _run(pipeline.stage_assign_refinement, DatasetStore(store_dir), force=force)


@main.command()
@store_option
@force_option
def finalize(store_dir, force):
    """Write the final multi-label ground truth."""
    _run(pipeline.stage_finalize, DatasetStore(store_dir), force=force)


@main.command()
@store_option
@click.option("--moe-as-written", is_flag=True, help="Use the alternative margin-of-error composition.")
@click.option("--count-empty-as-wrong", is_flag=True)
@force_option
def report(store_dir, moe_as_written, count_empty_as_wrong, force):
    """Produce the statistics reports (distribution, leaderboard, heatmap, regression, triage)."""
    _run(
        pipeline.stage_report,
        DatasetStore(store_dir),
        moe_as_written=moe_as_written,
        count_empty_as_wrong=count_empty_as_wrong,
        force=force,
    )


@main.command()
@store_option
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--admin-key", default="change-me", show_default=True)
def serve(store_dir, host, port, admin_key):
    """Host the annotator HTTP API (blocks until interrupted)."""
    import uvicorn

    from .api import create_app

    app = create_app(store_dir, admin_key=admin_key)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
