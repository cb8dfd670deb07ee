"""Pipeline stages shared by the CLI and the admin HTTP surface.

Each stage validates its prerequisites against the run manifest, runs the
underlying module operation, writes its artifacts, and marks itself
complete. Artifacts are deterministic for a given store content and seed;
only timestamps vary between runs.
"""

from __future__ import annotations

import logging
from pathlib import Path

from . import proposals as prop
from . import reports
from .agreement import build_refinement_queue
from .errors import (
    DegenerateInputError,
    StageOrderError,
    UndefinedMetricError,
    ValidationError,
)
from .metrics import (
    accuracy_by_label_count,
    evaluate_model_zoo,
    label_count_distribution,
    triage_report,
)
from .models import AnnotatorProfile, ExperienceTier, WorkflowPhase
from .store import DatasetStore, read_jsonl, write_jsonl_atomic
from .workflow import Manifest, Workflow, deterministic_run_id

log = logging.getLogger(__name__)


def _prepare(
    store: DatasetStore, manifest: Manifest, stage: str, force: bool, requires: list[str]
) -> None:
    for prereq in requires:
        manifest.require_stage(prereq)
    if stage in manifest.stages:
        if not force:
            raise StageOrderError(
                f"stage '{stage}' already completed; pass --force to run it again"
            )
        manifest.reset_downstream(stage)
        manifest.save(store.manifest_path)


def _finish(store: DatasetStore, manifest: Manifest, stage: str) -> None:
    manifest.mark_stage(stage)
    manifest.save(store.manifest_path)


def _workflow_for(store: DatasetStore, manifest: Manifest, wf: Workflow | None) -> Workflow:
    if wf is None:
        return Workflow(store)
    wf.manifest = manifest
    return wf


def stage_ingest(
    store: DatasetStore,
    catalog: Path,
    images: Path,
    predictions: list[Path],
    reference_labels: Path | None = None,
    force: bool = False,
) -> dict:
    manifest = Manifest.load(store.manifest_path)
    _prepare(store, manifest, "ingest", force, requires=[])
    cat = store.ingest_catalog(catalog)
    registry = store.ingest_images(images)
    models: list[str] = []
    for path in predictions:
        models.extend(store.ingest_predictions(path))
    if reference_labels is not None:
        store.ingest_reference_labels(reference_labels)
    _finish(store, manifest, "ingest")
    return {"classes": cat.k, "images": len(registry), "models": sorted(set(models))}


def stage_select_model(
    store: DatasetStore, count_empty_as_wrong: bool = False, force: bool = False
) -> dict:
    manifest = Manifest.load(store.manifest_path)
    _prepare(store, manifest, "select_model", force, requires=["ingest"])
    reference = store.reference_labels()
    images = store.images()
    originals = {i: rec.original_label for i, rec in images.items()}
    candidates = []
    for model_id in store.model_ids():
        preds = store.predictions(model_id)
        missing = set(reference) - set(preds)
        if missing:
            raise ValidationError(
                f"model {model_id!r} lacks predictions for {len(missing)} reference image(s)"
            )
        candidates.append((model_id, prop.top1_map(preds)))
    scores = [
        prop.score_model(model_id, top1, reference, originals, count_empty_as_wrong)
        for model_id, top1 in candidates
    ]
    best = prop.select_model(candidates, reference, originals, count_empty_as_wrong)
    scores.sort(key=lambda s: (-s.real_accuracy, s.model_id))
    reports.write_leaderboard_csv(store.reports_dir / "model_selection_leaderboard.csv", scores)
    manifest.selected_model = best.model_id
    manifest.config["count_empty_as_wrong"] = count_empty_as_wrong
    _finish(store, manifest, "select_model")
    return {"selected_model": best.model_id, "real_accuracy": best.real_accuracy}


def stage_propose(
    store: DatasetStore, k: int = 20, model_id: str | None = None, force: bool = False
) -> dict:
    manifest = Manifest.load(store.manifest_path)
    _prepare(store, manifest, "propose", force, requires=["ingest", "select_model"])
    chosen = model_id or manifest.selected_model
    if not chosen:
        raise StageOrderError("no model selected; run select-model first or pass --model")
    preds = store.predictions(chosen)
    missing = set(store.images()) - set(preds)
    if missing:
        raise ValidationError(
            f"model {chosen!r} lacks predictions for {len(missing)} registered image(s)"
        )
    proposal_sets = [prop.generate_proposals(rec, k=k) for rec in preds.values()]
    store.write_proposals(proposal_sets)
    manifest.config["k"] = k
    manifest.config["proposal_model"] = chosen
    _finish(store, manifest, "propose")
    return {"model": chosen, "k": k, "images": len(proposal_sets)}


def load_roster(path: Path) -> list[AnnotatorProfile]:
    roster = []
    for lineno, obj in read_jsonl(Path(path)):
        roster.append(
            AnnotatorProfile(
                annotator_id=str(obj["annotator_id"]),
                experience_tier=ExperienceTier(obj.get("experience_tier", "standard")),
                access_key=obj.get("access_key"),
            )
        )
    return roster


def stage_make_batches(
    store: DatasetStore,
    roster_path: Path,
    num_batches: int = 7,
    per_batch: int = 2,
    seed: int = 0,
    force: bool = False,
    wf: Workflow | None = None,
) -> dict:
    manifest = Manifest.load(store.manifest_path)
    _prepare(store, manifest, "make_batches", force, requires=["ingest", "propose"])
    manifest.seed = seed
    manifest.config.update({"num_batches": num_batches, "per_batch": per_batch})
    manifest.run_id = deterministic_run_id(seed, manifest.config)
    manifest.save(store.manifest_path)
    wf = _workflow_for(store, manifest, wf)
    wf.set_roster(load_roster(roster_path))
    batches = wf.setup_batches(num_batches, per_batch, seed)
    wf.manifest.mark_stage("make_batches")
    wf.manifest.save(store.manifest_path)
    return {
        "batches": [
            {"batch_id": b.batch_id, "size": len(b.image_ids), "annotators": list(b.assigned_annotators)}
            for b in batches
        ],
        "run_id": wf.manifest.run_id,
    }


def stage_analyze_agreement(
    store: DatasetStore, force: bool = False, wf: Workflow | None = None
) -> dict:
    manifest = Manifest.load(store.manifest_path)
    _prepare(store, manifest, "analyze_agreement", force, requires=["make_batches"])
    wf = _workflow_for(store, manifest, wf)
    wf.transition(WorkflowPhase.ANALYSIS)
    results, queue, missing = wf.analyze_agreement()
    _, summary = build_refinement_queue(results)
    summary.n_missing_submissions = missing
    reports.write_agreement_csv(store.reports_dir / "agreement.csv", results)
    reports.write_agreement_summary_json(store.reports_dir / "agreement_summary.json", summary)
    write_jsonl_atomic(store.queue_path, [{"image_id": i} for i in queue])
    wf.transition(WorkflowPhase.REFINEMENT)
    wf.manifest.mark_stage("analyze_agreement")
    wf.manifest.save(store.manifest_path)
    return {
        "agreed": summary.n_agreed,
        "needs_refinement": summary.n_needs_refinement,
        "missing_submissions": missing,
    }


def load_queue(store: DatasetStore) -> list[str]:
    if not store.queue_path.exists():
        raise StageOrderError("refinement queue not found; run analyze-agreement first")
    return [obj["image_id"] for _, obj in read_jsonl(store.queue_path)]


def stage_assign_refinement(
    store: DatasetStore, force: bool = False, wf: Workflow | None = None
) -> dict:
    manifest = Manifest.load(store.manifest_path)
    _prepare(store, manifest, "assign_refinement", force, requires=["analyze_agreement"])
    wf = _workflow_for(store, manifest, wf)
    queue = load_queue(store)
    slices = wf.setup_refinement(queue)
    wf.manifest.mark_stage("assign_refinement")
    wf.manifest.save(store.manifest_path)
    return {
        "slices": {a: len(imgs) for a, imgs in slices.items()},
        "overlaps": wf.manifest.refinement_overlaps,
    }


def stage_finalize(
    store: DatasetStore, force: bool = False, wf: Workflow | None = None
) -> dict:
    manifest = Manifest.load(store.manifest_path)
    _prepare(store, manifest, "finalize", force, requires=["assign_refinement"])
    wf = _workflow_for(store, manifest, wf)
    finals = wf.finalize_all()
    store.write_final_labels(finals)
    wf.transition(WorkflowPhase.FINAL)
    wf.manifest.mark_stage("finalize")
    wf.manifest.save(store.manifest_path)
    n_empty = sum(1 for rec in finals if not rec.label_set)
    return {"images": len(finals), "zero_label": n_empty}


def stage_report(
    store: DatasetStore,
    moe_as_written: bool = False,
    count_empty_as_wrong: bool = False,
    force: bool = False,
) -> dict:
    manifest = Manifest.load(store.manifest_path)
    _prepare(store, manifest, "report", force, requires=["finalize"])
    final = store.final_labels()
    images = store.images()
    originals = {i: rec.original_label for i, rec in images.items()}

    dist = label_count_distribution(final)
    reports.write_distribution_json(store.reports_dir / "distribution.json", dist)
    reports.write_distribution_csv(store.reports_dir / "distribution.csv", dist)

    model_tops = [
        (model_id, prop.top1_map(store.predictions(model_id)))
        for model_id in store.model_ids()
    ]
    try:
        zoo = evaluate_model_zoo(model_tops, final, originals, count_empty_as_wrong)
        reports.write_leaderboard_csv(store.reports_dir / "leaderboard.csv", zoo.scores)
        reports.write_regression_json(store.reports_dir / "regression.json", zoo)
        reports.write_regression_points_csv(store.reports_dir / "regression_points.csv", zoo)
    except (UndefinedMetricError, DegenerateInputError) as exc:
        # Too few or indistinguishable models for a fit; the leaderboard is still useful.
        log.warning("skipping regression report: %s", exc)
        scores = [
            prop.score_model(model_id, top1, final, originals, count_empty_as_wrong)
            for model_id, top1 in model_tops
        ]
        scores.sort(key=lambda s: (-s.real_accuracy, s.model_id))
        reports.write_leaderboard_csv(store.reports_dir / "leaderboard.csv", scores)

    cells = []
    for model_id, top1 in model_tops:
        cells.extend(accuracy_by_label_count(model_id, top1, final, originals, moe_as_written))
    reports.write_heatmap_csv(store.reports_dir / "heatmap.csv", cells)

    wf = Workflow(store)
    triage_count = len(wf.triage)
    if wf.triage:
        reports.write_triage_json(
            store.reports_dir / "triage.json", triage_report(wf.triage.values())
        )
    else:
        log.info("no triage records; skipping triage report")

    manifest = Manifest.load(store.manifest_path)
    manifest.config.update(
        {"moe_as_written": moe_as_written, "count_empty_as_wrong": count_empty_as_wrong}
    )
    _finish(store, manifest, "report")
    return {
        "reports_dir": str(store.reports_dir),
        "models": len(model_tops),
        "triage_records": triage_count,
        "multi_label_fraction": dist.multi_label_fraction,
    }
