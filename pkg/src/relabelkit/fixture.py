"""Synthetic dataset generator and deterministic annotator simulation.

Real relabeling runs need images, model prediction files and human
annotators; none of those can ship with the platform. `make_fixture`
fabricates a self-consistent stand-in (catalog, registry, per-model
scores, a multi-label reference, an annotator roster and a hidden truth
file), and `simulate_stage` replays scripted annotator behavior through
the normal submission path. Everything is a pure function of the seed, so
two runs with the same seed produce identical stores.
"""

from __future__ import annotations

import random
from pathlib import Path

from .models import (
    AnnotationStage,
    ExperienceTier,
    GtStance,
    QualityCategory,
    WorkflowPhase,
)
from .errors import StageOrderError, ValidationError
from .store import DatasetStore, read_jsonl, write_jsonl_atomic
from .workflow import LogicalClock, Workflow

_NOUNS = [
    "heron", "kettle", "lantern", "otter", "banjo", "glacier", "turbine", "maple",
    "compass", "ferret", "anchor", "dahlia", "gecko", "trolley", "quartz", "falcon",
    "bramble", "satchel", "walrus", "pylon", "orchid", "beacon", "mongoose", "spindle",
    "juniper", "cricket", "gondola", "thistle", "badger", "mosaic", "pelican", "drum",
]


def _rng(seed: int, *parts) -> random.Random:
    return random.Random(":".join([str(seed), *map(str, parts)]))


def _class_name(index: int) -> str:
    noun = _NOUNS[index % len(_NOUNS)]
    suffix = index // len(_NOUNS)
    return f"{noun}_{suffix}" if suffix else noun


def make_fixture(
    out_dir: Path,
    n_images: int = 200,
    n_classes: int = 10,
    n_models: int = 3,
    seed: int = 7,
    extra_label_rate: float = 0.35,
    zero_label_rate: float = 0.04,
) -> dict:
    """Write a synthetic dataset into `out_dir` and return its file map.

    Each image gets a hidden true label set: usually the original label
    plus geometric extras, occasionally empty (the annotators will find
    nothing). Model scores boost the true labels, with per-model error
    rates so the leaderboard has spread.
    """
    if n_classes < 2:
        raise ValidationError("fixture needs at least 2 classes")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    catalog_rows = []
    for class_id in range(n_classes):
        name = _class_name(class_id)
        catalog_rows.append(
            {
                "class_id": class_id,
                "name": name,
                "synonyms": [f"{name} ({alt})" for alt in ("common", "regional")],
                "exemplars": [
                    f"https://images.example/classes/{class_id:04d}/{j}.jpg" for j in range(10)
                ],
            }
        )
    write_jsonl_atomic(out / "catalog.jsonl", catalog_rows)

    image_rows = []
    truth_rows = []
    for idx in range(n_images):
        image_id = f"img_{idx:05d}"
        rng = _rng(seed, "image", image_id)
        original = rng.randrange(n_classes)
        image_rows.append(
            {
                "image_id": image_id,
                "uri": f"https://images.example/items/{image_id}.jpg",
                "original_label": original,
            }
        )
        if rng.random() < zero_label_rate:
            truth = set()
        else:
            truth = {original}
            while rng.random() < extra_label_rate:
                truth.add(rng.randrange(n_classes))
        truth_rows.append({"image_id": image_id, "labels": sorted(truth)})
    write_jsonl_atomic(out / "images.jsonl", image_rows)
    write_jsonl_atomic(out / "truth.jsonl", truth_rows)
    # The reference labels stand in for reassessed labels from prior work.
    write_jsonl_atomic(out / "reference_labels.jsonl", truth_rows)

    truth_by_image = {row["image_id"]: set(row["labels"]) for row in truth_rows}
    prediction_rows = []
    for m in range(n_models):
        model_id = f"model_{chr(ord('a') + m)}"
        miss_rate = 0.05 + 0.09 * m
        for row in image_rows:
            image_id = row["image_id"]
            rng = _rng(seed, "pred", model_id, image_id)
            scores = [rng.uniform(0.0, 0.5) for _ in range(n_classes)]
            for lbl in truth_by_image[image_id]:
                scores[lbl] += 1.5
            top_choice = row["original_label"]
            if rng.random() < miss_rate:
                top_choice = rng.randrange(n_classes)
            scores[top_choice] += 2.5
            scores = [round(s, 6) for s in scores]
            if m == n_models - 1:
                # Exercise the ranked-list ingestion path with the last model.
                ranked = sorted(range(n_classes), key=lambda c: (-scores[c], c))
                prediction_rows.append(
                    {
                        "model_id": model_id,
                        "image_id": image_id,
                        "topk": [[c, scores[c]] for c in ranked],
                    }
                )
            else:
                prediction_rows.append(
                    {"model_id": model_id, "image_id": image_id, "probs": scores}
                )
    write_jsonl_atomic(out / "predictions.jsonl", prediction_rows)

    roster_rows = []
    for i in range(1, 5):
        roster_rows.append(
            {
                "annotator_id": f"ann{i:02d}",
                "experience_tier": ExperienceTier.STANDARD.value,
                "access_key": f"key-ann{i:02d}",
            }
        )
    for i in range(5, 7):
        roster_rows.append(
            {
                "annotator_id": f"ann{i:02d}",
                "experience_tier": ExperienceTier.EXPERIENCED.value,
                "access_key": f"key-ann{i:02d}",
            }
        )
    write_jsonl_atomic(out / "roster.jsonl", roster_rows)

    return {
        "catalog": str(out / "catalog.jsonl"),
        "images": str(out / "images.jsonl"),
        "predictions": str(out / "predictions.jsonl"),
        "reference_labels": str(out / "reference_labels.jsonl"),
        "roster": str(out / "roster.jsonl"),
        "truth": str(out / "truth.jsonl"),
    }


def load_truth(path: Path) -> dict[str, set[int]]:
    return {obj["image_id"]: set(obj["labels"]) for _, obj in read_jsonl(Path(path))}


def _perturb(
    rng: random.Random, target: set[int], pool: list[int], drop_rate: float, add_rate: float
) -> set[int]:
    selected = set(target)
    if selected and rng.random() < drop_rate:
        selected.discard(rng.choice(sorted(selected)))
    if rng.random() < add_rate:
        extras = [c for c in pool if c not in selected]
        if extras:
            selected.add(rng.choice(extras))
    return selected


def simulate_stage(
    store: DatasetStore,
    truth_path: Path,
    stage: str,
    seed: int = 7,
    drop_rate: float = 0.08,
    add_rate: float = 0.05,
) -> dict:
    """Submit scripted annotations for one workflow stage.

    initial: every assigned annotator submits a perturbed view of the true
    set restricted to the proposal list. refinement: the assigned refiner
    submits the true visible set, documenting any change to the
    pre-checked labels. triage: experienced annotators categorize
    zero-label images round-robin.
    """
    truth = load_truth(truth_path)
    wf = Workflow(store)
    # Logical timestamps keep the event log a pure function of the seed.
    wf.clock = LogicalClock(start=wf.log.next_seq)
    submitted = 0

    if stage == "initial":
        if wf.phase is not WorkflowPhase.INITIAL:
            raise StageOrderError(f"workflow phase is {wf.phase.value}, expected initial")
        for batch in wf.manifest.batches:
            for annotator_id in batch.assigned_annotators:
                for image_id in batch.image_ids:
                    proposal = wf.proposals()[image_id]
                    visible = truth.get(image_id, set()) & set(proposal.ranked_labels)
                    rng = _rng(seed, "initial", annotator_id, image_id)
                    selection = _perturb(
                        rng, visible, list(proposal.ranked_labels), drop_rate, add_rate
                    )
                    wf.submit_annotation(
                        annotator_id, image_id, AnnotationStage.INITIAL, selection
                    )
                    submitted += 1
        return {"stage": stage, "submissions": submitted}

    if stage == "refinement":
        if wf.phase is not WorkflowPhase.REFINEMENT:
            raise StageOrderError(f"workflow phase is {wf.phase.value}, expected refinement")
        for annotator_id, image_ids in sorted(wf.manifest.refinement_slices.items()):
            for image_id in image_ids:
                prechecked, presentation = wf.build_refinement_presentation(image_id)
                target = truth.get(image_id, set()) & set(presentation.ranked_labels)
                comment = None
                if frozenset(target) != prechecked:
                    added = sorted(set(target) - prechecked)
                    removed = sorted(prechecked - set(target))
                    comment = f"adjusted after exemplar review: added {added}, removed {removed}"
                wf.submit_annotation(
                    annotator_id, image_id, AnnotationStage.REFINEMENT, target, comment=comment
                )
                submitted += 1
        return {"stage": stage, "submissions": submitted}

    if stage == "triage":
        if wf.phase is not WorkflowPhase.FINAL:
            raise StageOrderError(f"workflow phase is {wf.phase.value}, expected final")
        experienced = wf.experienced_ids()
        if not experienced:
            raise ValidationError("no experienced annotators in roster")
        for idx, image_id in enumerate(wf.triage_queue()):
            annotator_id = experienced[idx % len(experienced)]
            rng = _rng(seed, "triage", image_id)
            wf.record_triage(
                image_id,
                quality_category=rng.choice(list(QualityCategory)),
                gt_stance=rng.choice(list(GtStance)),
                annotator_id=annotator_id,
            )
            submitted += 1
        return {"stage": stage, "submissions": submitted}

    raise ValidationError(f"unknown simulation stage {stage!r}")
