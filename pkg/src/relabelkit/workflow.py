"""Batching, annotation submissions, refinement, finalization and triage.

State is event-sourced: every submission, triage record and phase
transition is appended to `events.jsonl` with a monotone sequence number,
and the in-memory view is rebuilt by replaying that log. Batch layout,
roster and refinement slices live in the run manifest.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import AbstractSet, Callable, Iterable, Sequence

from .agreement import build_refinement_queue, check_agreement
from .errors import (
    MissingCommentError,
    NotAssignedError,
    NotReadyError,
    StageOrderError,
    StaleStageError,
    UnknownIdError,
    ValidationError,
)
from .models import (
    PHASE_ORDER,
    AgreementResult,
    AgreementStatus,
    AnnotationRecord,
    AnnotationStage,
    AnnotatorProfile,
    Batch,
    ExperienceTier,
    GtStance,
    MultiLabelGroundTruth,
    ProposalSet,
    QualityCategory,
    TriageRecord,
    WorkflowPhase,
)
from .store import DatasetStore, write_json_atomic

Clock = Callable[[], str]


def utc_now_iso() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class LogicalClock:
    """Deterministic clock for simulations: epoch plus one second per call."""

    def __init__(self, start: int = 0):
        self._tick = start

    def __call__(self) -> str:
        self._tick += 1
        stamp = _dt.datetime.fromtimestamp(self._tick, _dt.timezone.utc)
        return stamp.isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# Pure helpers


def chunk_contiguous(items: Sequence, num_chunks: int) -> list[list]:
    """Split into contiguous chunks whose sizes differ by at most one."""
    if num_chunks < 1:
        raise ValidationError(f"need at least one chunk, got {num_chunks}")
    base, extra = divmod(len(items), num_chunks)
    chunks = []
    start = 0
    for i in range(num_chunks):
        size = base + (1 if i < extra else 0)
        chunks.append(list(items[start : start + size]))
        start += size
    return chunks


def create_batches(
    image_ids: Sequence[str],
    num_batches: int,
    annotators: Sequence[str],
    per_batch: int,
    seed: int = 0,
) -> list[Batch]:
    """Partition images into contiguous batches and assign annotators.

    The seed shuffles the annotator rotation; assignment is round-robin so
    no annotator appears twice in one batch.
    """
    if per_batch < 1:
        raise ValidationError(f"annotators per batch must be >= 1, got {per_batch}")
    distinct = list(dict.fromkeys(annotators))
    if len(distinct) != len(annotators):
        raise ValidationError("annotator roster contains duplicates")
    if len(distinct) < per_batch:
        raise ValidationError(
            f"need at least {per_batch} distinct annotators, got {len(distinct)}"
        )
    rotation = list(annotators)
    random.Random(seed).shuffle(rotation)
    batches = []
    for batch_id, ids in enumerate(chunk_contiguous(list(image_ids), num_batches)):
        assigned = tuple(
            rotation[(batch_id * per_batch + j) % len(rotation)] for j in range(per_batch)
        )
        batches.append(Batch(batch_id=batch_id, image_ids=tuple(ids), assigned_annotators=assigned))
    return batches


def assign_refinement(
    queue: Sequence[str], experienced: Sequence[str]
) -> dict[str, list[str]]:
    """Split the refinement queue into near-equal contiguous slices, one per annotator."""
    if not experienced:
        raise ValidationError("refinement needs at least one experienced annotator")
    distinct = list(dict.fromkeys(experienced))
    if len(distinct) != len(experienced):
        raise ValidationError("experienced roster contains duplicates")
    slices = chunk_contiguous(list(queue), len(experienced))
    return {annotator: chunk for annotator, chunk in zip(experienced, slices) if chunk}


# ---------------------------------------------------------------------------
# Manifest


STAGE_SEQUENCE = [
    "ingest",
    "select_model",
    "propose",
    "make_batches",
    "analyze_agreement",
    "assign_refinement",
    "finalize",
    "report",
]


@dataclass
class Manifest:
    run_id: str = ""
    seed: int = 0
    config: dict = field(default_factory=dict)
    selected_model: str | None = None
    roster: list[AnnotatorProfile] = field(default_factory=list)
    batches: list[Batch] = field(default_factory=list)
    refinement_slices: dict[str, list[str]] = field(default_factory=dict)
    refinement_overlaps: dict[str, int] = field(default_factory=dict)
    stages: dict[str, str] = field(default_factory=dict)  # stage -> completion timestamp

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "config": self.config,
            "selected_model": self.selected_model,
            "roster": [
                {
                    "annotator_id": a.annotator_id,
                    "experience_tier": a.experience_tier.value,
                    "access_key": a.access_key,
                }
                for a in self.roster
            ],
            "batches": [
                {
                    "batch_id": b.batch_id,
                    "image_ids": list(b.image_ids),
                    "assigned_annotators": list(b.assigned_annotators),
                }
                for b in self.batches
            ],
            "refinement_slices": self.refinement_slices,
            "refinement_overlaps": self.refinement_overlaps,
            "stages": self.stages,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Manifest":
        return cls(
            run_id=obj.get("run_id", ""),
            seed=obj.get("seed", 0),
            config=obj.get("config", {}),
            selected_model=obj.get("selected_model"),
            roster=[
                AnnotatorProfile(
                    annotator_id=a["annotator_id"],
                    experience_tier=ExperienceTier(a["experience_tier"]),
                    access_key=a.get("access_key"),
                )
                for a in obj.get("roster", [])
            ],
            batches=[
                Batch(
                    batch_id=b["batch_id"],
                    image_ids=tuple(b["image_ids"]),
                    assigned_annotators=tuple(b["assigned_annotators"]),
                )
                for b in obj.get("batches", [])
            ],
            refinement_slices=obj.get("refinement_slices", {}),
            refinement_overlaps=obj.get("refinement_overlaps", {}),
            stages=obj.get("stages", {}),
        )

    @classmethod
    def load(cls, path: Path) -> "Manifest":
        if not path.exists():
            return cls()
        return cls.from_json(json.loads(path.read_text(encoding="utf-8")))

    def save(self, path: Path) -> None:
        write_json_atomic(path, self.to_json())

    def require_stage(self, stage: str) -> None:
        if stage not in self.stages:
            raise StageOrderError(f"stage '{stage}' has not been run yet")

    def mark_stage(self, stage: str, when: str | None = None) -> None:
        self.stages[stage] = when or utc_now_iso()

    def reset_downstream(self, stage: str) -> None:
        idx = STAGE_SEQUENCE.index(stage)
        for later in STAGE_SEQUENCE[idx:]:
            self.stages.pop(later, None)


def deterministic_run_id(seed: int, config: dict) -> str:
    blob = json.dumps({"seed": seed, "config": config}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Event log


class EventLog:
    """Append-only JSONL log with monotone sequence numbers.

    Appends write a whole line and flush before returning; replay tolerates
    a trailing partial line from an interrupted write.
    """

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        self._next_seq = 1
        if path.exists():
            for event in self.replay():
                self._next_seq = event["seq"] + 1

    @property
    def next_seq(self) -> int:
        return self._next_seq

    def replay(self) -> list[dict]:
        if not self.path.exists():
            return []
        events = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError:
                    break  # torn tail write; everything before it is durable
        return events

    def append(self, event_type: str, payload: dict, at: str) -> int:
        with self._lock:
            seq = self._next_seq
            record = {"seq": seq, "type": event_type, "at": at, **payload}
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
                fh.write("\n")
                fh.flush()
            self._next_seq = seq + 1
            return seq


# ---------------------------------------------------------------------------
# Workflow service


class Workflow:
    """Owns the annotation state machine for one store.

    Writes are serialized per (annotator, image, stage) on top of the event
    log's append lock; different annotators only contend for the short
    append itself.
    """

    def __init__(self, store: DatasetStore, clock: Clock | None = None):
        self.store = store
        self.clock: Clock = clock or utc_now_iso
        self.manifest = Manifest.load(store.manifest_path)
        self.log = EventLog(store.events_path)
        self.phase = WorkflowPhase.SETUP
        # (annotator_id, image_id, stage) -> revision history, oldest first
        self.submissions: dict[tuple[str, str, str], list[AnnotationRecord]] = {}
        self.triage: dict[str, TriageRecord] = {}
        self._key_locks: dict[tuple[str, str, str], threading.Lock] = {}
        self._key_locks_guard = threading.Lock()
        self._proposals: dict[str, ProposalSet] | None = None
        self._replay()

    # -- state reconstruction ------------------------------------------------

    def _replay(self) -> None:
        for event in self.log.replay():
            kind = event["type"]
            if kind == "submission":
                rec = AnnotationRecord(
                    annotator_id=event["annotator_id"],
                    image_id=event["image_id"],
                    stage=AnnotationStage(event["stage"]),
                    selected_labels=frozenset(event["labels"]),
                    comment=event.get("comment"),
                    revision=event["revision"],
                    submitted_at=event["at"],
                )
                self._submission_history(rec.annotator_id, rec.image_id, rec.stage).append(rec)
            elif kind == "triage":
                self.triage[event["image_id"]] = TriageRecord(
                    image_id=event["image_id"],
                    quality_category=QualityCategory(event["quality_category"]),
                    gt_stance=GtStance(event["gt_stance"]),
                    annotator_id=event["annotator_id"],
                )
            elif kind == "phase":
                self.phase = WorkflowPhase(event["phase"])

    def _submission_history(
        self, annotator_id: str, image_id: str, stage: AnnotationStage
    ) -> list[AnnotationRecord]:
        return self.submissions.setdefault((annotator_id, image_id, stage.value), [])

    def _key_lock(self, key: tuple[str, str, str]) -> threading.Lock:
        with self._key_locks_guard:
            return self._key_locks.setdefault(key, threading.Lock())

    # -- setup ----------------------------------------------------------------

    def proposals(self) -> dict[str, ProposalSet]:
        if self._proposals is None:
            self._proposals = self.store.load_proposals()
        return self._proposals

    def set_roster(self, roster: Iterable[AnnotatorProfile]) -> None:
        profiles = list(roster)
        ids = [p.annotator_id for p in profiles]
        if len(set(ids)) != len(ids):
            raise ValidationError("roster contains duplicate annotator ids")
        self.manifest.roster = profiles
        self.manifest.save(self.store.manifest_path)

    def annotator(self, annotator_id: str) -> AnnotatorProfile:
        for profile in self.manifest.roster:
            if profile.annotator_id == annotator_id:
                return profile
        raise UnknownIdError(f"unknown annotator {annotator_id!r}")

    def experienced_ids(self) -> list[str]:
        return sorted(
            p.annotator_id
            for p in self.manifest.roster
            if p.experience_tier is ExperienceTier.EXPERIENCED
        )

    def setup_batches(
        self, num_batches: int, per_batch: int, seed: int
    ) -> list[Batch]:
        image_ids = list(self.store.images())
        annotator_ids = [p.annotator_id for p in self.manifest.roster]
        batches = create_batches(image_ids, num_batches, annotator_ids, per_batch, seed)
        self.manifest.batches = batches
        self.manifest.save(self.store.manifest_path)
        self.transition(WorkflowPhase.INITIAL)
        return batches

    # -- phase machine ---------------------------------------------------------

    def transition(self, target: WorkflowPhase) -> None:
        """Advance the workflow phase; backward transitions are rejected,
        re-asserting the current phase is a no-op."""
        current_idx = PHASE_ORDER.index(self.phase)
        target_idx = PHASE_ORDER.index(target)
        if target_idx < current_idx:
            raise StageOrderError(
                f"cannot move phase backward from {self.phase.value} to {target.value}"
            )
        if target_idx == current_idx:
            return
        self.phase = target
        self.log.append("phase", {"phase": target.value}, at=self.clock())

    # -- assignment lookups ------------------------------------------------------

    def batch_of(self, image_id: str) -> Batch:
        for batch in self.manifest.batches:
            if image_id in batch.image_ids:
                return batch
        raise UnknownIdError(f"image {image_id!r} is not in any batch")

    def initial_images_for(self, annotator_id: str) -> list[str]:
        images: list[str] = []
        for batch in self.manifest.batches:
            if annotator_id in batch.assigned_annotators:
                images.extend(batch.image_ids)
        return images

    def refinement_images_for(self, annotator_id: str) -> list[str]:
        return list(self.manifest.refinement_slices.get(annotator_id, []))

    # -- submissions ---------------------------------------------------------------

    def latest(
        self, annotator_id: str, image_id: str, stage: AnnotationStage
    ) -> AnnotationRecord | None:
        history = self.submissions.get((annotator_id, image_id, stage.value))
        return history[-1] if history else None

    def presented_labels(self, image_id: str, stage: AnnotationStage) -> frozenset[int]:
        if stage is AnnotationStage.REFINEMENT:
            _, presentation = self.build_refinement_presentation(image_id)
            return presentation.label_set
        proposal = self.proposals().get(image_id)
        if proposal is None:
            raise UnknownIdError(f"no proposals generated for image {image_id!r}")
        return proposal.label_set

    def submit_annotation(
        self,
        annotator_id: str,
        image_id: str,
        stage: AnnotationStage,
        selected_labels: AbstractSet[int],
        comment: str | None = None,
    ) -> int:
        """Validate and persist one submission; returns the accepted revision.

        Resubmitting identical content is idempotent and returns the
        existing revision without a new log entry.
        """
        profile = self.annotator(annotator_id)
        if image_id not in self.store.images():
            raise UnknownIdError(f"unknown image {image_id!r}")
        if stage is AnnotationStage.INITIAL:
            if self.phase is not WorkflowPhase.INITIAL:
                raise StaleStageError(
                    f"initial annotation is closed (workflow phase: {self.phase.value})"
                )
            batch = self.batch_of(image_id)
            if annotator_id not in batch.assigned_annotators:
                raise NotAssignedError(
                    f"{annotator_id!r} is not assigned to batch {batch.batch_id}"
                )
            prechecked: frozenset[int] = frozenset()
        else:
            if self.phase is not WorkflowPhase.REFINEMENT:
                raise StaleStageError(
                    f"refinement is not open (workflow phase: {self.phase.value})"
                )
            if image_id not in self.manifest.refinement_slices.get(annotator_id, []):
                raise NotAssignedError(
                    f"{annotator_id!r} is not the refiner for image {image_id!r}"
                )
            prechecked, presentation = self.build_refinement_presentation(image_id)

        selected = frozenset(int(c) for c in selected_labels)
        if stage is AnnotationStage.REFINEMENT:
            allowed = presentation.label_set
        else:
            proposal = self.proposals().get(image_id)
            if proposal is None:
                raise UnknownIdError(f"no proposals generated for image {image_id!r}")
            allowed = proposal.label_set
        stray = selected - allowed
        if stray:
            raise ValidationError(
                f"labels {sorted(stray)} are not among the presented proposals",
                field="selected_labels",
            )
        if stage is AnnotationStage.REFINEMENT and selected != prechecked and not (comment or "").strip():
            raise MissingCommentError(
                "refinement changed the pre-checked labels; a comment documenting the change is required",
                field="comment",
            )

        key = (annotator_id, image_id, stage.value)
        with self._key_lock(key):
            history = self._submission_history(annotator_id, image_id, stage)
            if history:
                last = history[-1]
                if last.selected_labels == selected and (last.comment or "") == (comment or ""):
                    return last.revision
            revision = (history[-1].revision if history else 0) + 1
            at = self.clock()
            self.log.append(
                "submission",
                {
                    "annotator_id": annotator_id,
                    "image_id": image_id,
                    "stage": stage.value,
                    "labels": sorted(selected),
                    "comment": comment,
                    "revision": revision,
                },
                at=at,
            )
            history.append(
                AnnotationRecord(
                    annotator_id=annotator_id,
                    image_id=image_id,
                    stage=stage,
                    selected_labels=selected,
                    comment=comment,
                    revision=revision,
                    submitted_at=at,
                )
            )
            return revision

    # -- refinement ------------------------------------------------------------------

    def initial_label_sets(self, image_id: str) -> tuple[list[frozenset[int]], int]:
        """Latest initial label set per assigned annotator.

        A missing submission is treated as an empty set (it can never
        satisfy agreement, so such images are always routed to refinement);
        the count of missing submissions is returned for reporting.
        """
        batch = self.batch_of(image_id)
        sets: list[frozenset[int]] = []
        missing = 0
        for annotator_id in batch.assigned_annotators:
            rec = self.latest(annotator_id, image_id, AnnotationStage.INITIAL)
            if rec is None:
                missing += 1
                sets.append(frozenset())
            else:
                sets.append(rec.selected_labels)
        return sets, missing

    def build_refinement_presentation(
        self, image_id: str
    ) -> tuple[frozenset[int], ProposalSet]:
        """Pre-checked union of initial selections plus the proposal list.

        Human-selected labels outside the model's list are appended after
        the ranked groups (ascending class id) so refiners still see them.
        """
        record = self.store.images().get(image_id)
        if record is None:
            raise UnknownIdError(f"unknown image {image_id!r}")
        proposal = self.proposals().get(image_id)
        if proposal is None:
            raise UnknownIdError(f"no proposals generated for image {image_id!r}")
        sets, _ = self.initial_label_sets(image_id)
        verdict = check_agreement(sets, record.original_label, image_id=image_id)
        if verdict.status is AgreementStatus.AGREED:
            raise NotAssignedError(
                f"image {image_id!r} passed agreement and is not queued for refinement"
            )
        prechecked = frozenset().union(*sets) if sets else frozenset()
        extras = sorted(prechecked - proposal.label_set)
        if extras:
            proposal = ProposalSet.from_ranking(
                image_id, list(proposal.ranked_labels) + extras
            )
        return prechecked, proposal

    def analyze_agreement(self) -> tuple[list[AgreementResult], list[str], int]:
        """Run the agreement predicate over every image.

        Returns (results, refinement queue, number of missing submissions).
        """
        images = self.store.images()
        results: list[AgreementResult] = []
        total_missing = 0
        for image_id, record in images.items():
            sets, missing = self.initial_label_sets(image_id)
            total_missing += missing
            results.append(check_agreement(sets, record.original_label, image_id=image_id))
        queue, _ = build_refinement_queue(results)
        return results, queue, total_missing

    def setup_refinement(self, queue: Sequence[str]) -> dict[str, list[str]]:
        experienced = self.experienced_ids()
        slices = assign_refinement(queue, experienced)
        overlaps: dict[str, int] = {}
        for annotator_id, image_ids in slices.items():
            overlaps[annotator_id] = sum(
                1
                for image_id in image_ids
                if annotator_id in self.batch_of(image_id).assigned_annotators
            )
        self.manifest.refinement_slices = slices
        self.manifest.refinement_overlaps = overlaps
        self.manifest.save(self.store.manifest_path)
        return slices

    def refiner_of(self, image_id: str) -> str | None:
        for annotator_id, image_ids in self.manifest.refinement_slices.items():
            if image_id in image_ids:
                return annotator_id
        return None

    # -- finalization -------------------------------------------------------------------

    def finalize_labels(self, image_id: str) -> MultiLabelGroundTruth:
        """Final label set for one image.

        Agreed images keep their unanimous initial set; queued images take
        the refiner's latest selection. Raises until the image's workflow
        has actually completed.
        """
        record = self.store.images().get(image_id)
        if record is None:
            raise UnknownIdError(f"unknown image {image_id!r}")
        sets, _ = self.initial_label_sets(image_id)
        result = check_agreement(sets, record.original_label, image_id=image_id)
        if result.status is AgreementStatus.AGREED:
            return MultiLabelGroundTruth(image_id=image_id, label_set=result.annotator_sets[0])
        refiner = self.refiner_of(image_id)
        if refiner is None:
            raise NotReadyError(
                f"image {image_id!r} needs refinement but no refiner is assigned"
            )
        rec = self.latest(refiner, image_id, AnnotationStage.REFINEMENT)
        if rec is None:
            raise NotReadyError(
                f"image {image_id!r} is awaiting refinement by {refiner!r}"
            )
        return MultiLabelGroundTruth(image_id=image_id, label_set=rec.selected_labels)

    def finalize_all(self) -> list[MultiLabelGroundTruth]:
        return [self.finalize_labels(image_id) for image_id in self.store.images()]

    # -- triage -------------------------------------------------------------------------

    def record_triage(
        self,
        image_id: str,
        quality_category: QualityCategory,
        gt_stance: GtStance,
        annotator_id: str,
    ) -> TriageRecord:
        """Store a zero-label triage record (experienced annotators only)."""
        profile = self.annotator(annotator_id)
        if profile.experience_tier is not ExperienceTier.EXPERIENCED:
            raise NotAssignedError("triage requires an experienced-tier annotator")
        final = self.store.final_labels()
        if image_id not in final:
            raise UnknownIdError(f"image {image_id!r} has no finalized labels")
        if final[image_id]:
            raise ValidationError(
                f"image {image_id!r} has labels {sorted(final[image_id])}; only zero-label images are triaged"
            )
        record = TriageRecord(
            image_id=image_id,
            quality_category=quality_category,
            gt_stance=gt_stance,
            annotator_id=annotator_id,
        )
        existing = self.triage.get(image_id)
        if existing == record:
            return existing
        self.log.append(
            "triage",
            {
                "image_id": image_id,
                "quality_category": quality_category.value,
                "gt_stance": gt_stance.value,
                "annotator_id": annotator_id,
            },
            at=self.clock(),
        )
        self.triage[image_id] = record
        return record

    def triage_queue(self) -> list[str]:
        final = self.store.final_labels()
        return sorted(i for i, labels in final.items() if not labels and i not in self.triage)

    # -- task cursor -----------------------------------------------------------------------

    def next_task(self, annotator_id: str) -> tuple[str | None, AnnotationStage | str, int, int]:
        """Lowest-ordered pending image for this annotator in the current phase.

        Returns (image_id or None, task kind, done, total). The cursor is
        stable: it only moves once a submission lands.
        """
        profile = self.annotator(annotator_id)
        if self.phase is WorkflowPhase.INITIAL:
            images = self.initial_images_for(annotator_id)
            stage: AnnotationStage | str = AnnotationStage.INITIAL
            done_ids = [
                i for i in images if self.latest(annotator_id, i, AnnotationStage.INITIAL)
            ]
        elif self.phase is WorkflowPhase.REFINEMENT:
            images = self.refinement_images_for(annotator_id)
            stage = AnnotationStage.REFINEMENT
            done_ids = [
                i for i in images if self.latest(annotator_id, i, AnnotationStage.REFINEMENT)
            ]
        elif (
            self.phase is WorkflowPhase.FINAL
            and profile.experience_tier is ExperienceTier.EXPERIENCED
        ):
            final = self.store.final_labels()
            images = sorted(i for i, labels in final.items() if not labels)
            stage = "triage"
            done_ids = [i for i in images if i in self.triage]
        else:
            return None, AnnotationStage.INITIAL, 0, 0
        done = set(done_ids)
        pending = [i for i in images if i not in done]
        return (pending[0] if pending else None), stage, len(done_ids), len(images)
