import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relabelkit.errors import (
    MissingCommentError,
    NotAssignedError,
    NotReadyError,
    StageOrderError,
    StaleStageError,
    ValidationError,
)
from relabelkit.models import (
    AnnotationStage,
    ExperienceTier,
    GtStance,
    QualityCategory,
    WorkflowPhase,
)
from relabelkit.workflow import Workflow, assign_refinement, create_batches

from conftest import build_workflow

INITIAL = AnnotationStage.INITIAL
REFINEMENT = AnnotationStage.REFINEMENT


class TestCreateBatches:
    def test_seven_batches_of_ten_thousand(self):
        ids = [f"i{n:05d}" for n in range(10_000)]
        batches = create_batches(ids, 7, ["a", "b"], per_batch=2)
        sizes = [len(b.image_ids) for b in batches]
        assert sorted(sizes, reverse=True) == [1429] * 4 + [1428] * 3
        assert sum(sizes) == 10_000
        # Contiguous chunks: concatenation reproduces the input order.
        flattened = [i for b in batches for i in b.image_ids]
        assert flattened == ids

    def test_single_batch_assigns_both(self):
        batches = create_batches([f"i{n}" for n in range(10)], 1, ["a", "b"], per_batch=2)
        assert len(batches) == 1
        assert set(batches[0].assigned_annotators) == {"a", "b"}

    def test_too_few_annotators(self):
        with pytest.raises(ValidationError):
            create_batches(["i1"], 1, ["a"], per_batch=2)

    def test_duplicate_annotators_rejected(self):
        with pytest.raises(ValidationError):
            create_batches(["i1"], 1, ["a", "a"], per_batch=2)

    def test_deterministic_given_seed(self):
        ids = [f"i{n}" for n in range(50)]
        annotators = ["a", "b", "c", "d", "e"]
        one = create_batches(ids, 7, annotators, 2, seed=13)
        two = create_batches(ids, 7, annotators, 2, seed=13)
        assert one == two

    @given(
        n_images=st.integers(min_value=0, max_value=300),
        num_batches=st.integers(min_value=1, max_value=12),
        n_annotators=st.integers(min_value=2, max_value=8),
        per_batch=st.integers(min_value=1, max_value=4),
        seed=st.integers(min_value=0, max_value=99),
    )
    @settings(max_examples=120, deadline=None)
    def test_partition_and_assignment_properties(
        self, n_images, num_batches, n_annotators, per_batch, seed
    ):
        if per_batch > n_annotators:
            return
        ids = [f"i{n:04d}" for n in range(n_images)]
        annotators = [f"a{j}" for j in range(n_annotators)]
        batches = create_batches(ids, num_batches, annotators, per_batch, seed)
        seen = [i for b in batches for i in b.image_ids]
        assert seen == ids  # disjoint and covering, order preserved
        sizes = [len(b.image_ids) for b in batches]
        assert max(sizes) - min(sizes) <= 1
        for b in batches:
            assert len(b.assigned_annotators) == per_batch
            assert len(set(b.assigned_annotators)) == per_batch


class TestAssignRefinement:
    def test_five_equal_slices(self):
        queue = [f"i{n:05d}" for n in range(6425)]
        slices = assign_refinement(queue, [f"e{j}" for j in range(5)])
        assert [len(s) for s in slices.values()] == [1285] * 5

    def test_uneven_split(self):
        slices = assign_refinement([f"i{n}" for n in range(7)], ["x", "y", "z"])
        assert sorted(len(s) for s in slices.values()) == [2, 2, 3]

    def test_empty_queue(self):
        assert assign_refinement([], ["x", "y"]) == {}

    def test_no_annotators(self):
        with pytest.raises(ValidationError):
            assign_refinement(["i1"], [])

    def test_each_image_exactly_once(self):
        queue = [f"i{n}" for n in range(100)]
        slices = assign_refinement(queue, ["a", "b", "c"])
        combined = [i for chunk in slices.values() for i in chunk]
        assert combined == queue


class TestSubmissions:
    def test_revisions_increment_and_history_is_retained(self, tmp_path):
        store, wf = build_workflow(tmp_path)
        batch = wf.manifest.batches[0]
        annotator = batch.assigned_annotators[0]
        image = batch.image_ids[0]
        labels = set(wf.proposals()[image].ranked_labels[:1])
        assert wf.submit_annotation(annotator, image, INITIAL, labels) == 1
        more = set(wf.proposals()[image].ranked_labels[:2])
        assert wf.submit_annotation(annotator, image, INITIAL, more) == 2
        history = wf.submissions[(annotator, image, "initial")]
        assert [rec.revision for rec in history] == [1, 2]
        assert history[0].selected_labels == frozenset(labels)

    def test_identical_resubmission_is_idempotent(self, tmp_path):
        store, wf = build_workflow(tmp_path)
        batch = wf.manifest.batches[0]
        annotator = batch.assigned_annotators[0]
        image = batch.image_ids[0]
        labels = set(wf.proposals()[image].ranked_labels[:2])
        assert wf.submit_annotation(annotator, image, INITIAL, labels) == 1
        before = store.events_path.read_bytes()
        assert wf.submit_annotation(annotator, image, INITIAL, labels) == 1
        assert store.events_path.read_bytes() == before

    def test_empty_selection_is_a_legal_submission(self, tmp_path):
        store, wf = build_workflow(tmp_path)
        batch = wf.manifest.batches[0]
        assert wf.submit_annotation(batch.assigned_annotators[0], batch.image_ids[0], INITIAL, set()) == 1

    def test_label_outside_proposals_rejected(self, tmp_path):
        store, wf = build_workflow(tmp_path, proposals_per_image=3)
        batch = wf.manifest.batches[0]
        image = batch.image_ids[0]
        outside = set(range(10)) - set(wf.proposals()[image].ranked_labels)
        with pytest.raises(ValidationError, match="not among the presented"):
            wf.submit_annotation(
                batch.assigned_annotators[0], image, INITIAL, {next(iter(outside))}
            )

    def test_unassigned_annotator_rejected(self, tmp_path):
        store, wf = build_workflow(tmp_path)
        batch = wf.manifest.batches[0]
        other = [
            p.annotator_id
            for p in wf.manifest.roster
            if p.annotator_id not in batch.assigned_annotators
        ][0]
        with pytest.raises(NotAssignedError):
            wf.submit_annotation(other, batch.image_ids[0], INITIAL, set())

    def test_stale_stage_rejected(self, tmp_path):
        store, wf = build_workflow(tmp_path)
        batch = wf.manifest.batches[0]
        annotator = batch.assigned_annotators[0]
        image = batch.image_ids[0]
        with pytest.raises(StaleStageError):
            wf.submit_annotation(annotator, image, REFINEMENT, set())
        wf.transition(WorkflowPhase.ANALYSIS)
        with pytest.raises(StaleStageError):
            wf.submit_annotation(annotator, image, INITIAL, set())

    def test_phase_cannot_move_backward(self, tmp_path):
        store, wf = build_workflow(tmp_path)
        wf.transition(WorkflowPhase.ANALYSIS)
        with pytest.raises(StageOrderError):
            wf.transition(WorkflowPhase.INITIAL)


def _submit_initial_everywhere(wf, chooser):
    """chooser(image_id, annotator_index, proposals) -> label set"""
    for batch in wf.manifest.batches:
        for idx, annotator in enumerate(batch.assigned_annotators):
            for image in batch.image_ids:
                wf.submit_annotation(
                    annotator, image, INITIAL, chooser(image, idx, wf.proposals()[image])
                )


def _open_refinement(wf):
    wf.transition(WorkflowPhase.ANALYSIS)
    _, queue, _ = wf.analyze_agreement()
    wf.setup_refinement(queue)
    wf.transition(WorkflowPhase.REFINEMENT)
    return queue


class TestRefinement:
    def test_prechecked_is_union_of_initial_selections(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=1, proposals_per_image=5)
        image = "img_0000"
        proposals = wf.proposals()[image].ranked_labels
        a, b = wf.manifest.batches[0].assigned_annotators
        wf.submit_annotation(a, image, INITIAL, {proposals[0], proposals[1]})
        wf.submit_annotation(b, image, INITIAL, {proposals[1], proposals[2]})
        _open_refinement(wf)
        prechecked, presentation = wf.build_refinement_presentation(image)
        assert prechecked == {proposals[0], proposals[1], proposals[2]}
        assert presentation.ranked_labels == wf.proposals()[image].ranked_labels

    def test_both_empty_gives_empty_prechecked_with_full_list(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=1)
        image = "img_0000"
        for annotator in wf.manifest.batches[0].assigned_annotators:
            wf.submit_annotation(annotator, image, INITIAL, set())
        _open_refinement(wf)
        prechecked, presentation = wf.build_refinement_presentation(image)
        assert prechecked == frozenset()
        assert presentation.ranked_labels == wf.proposals()[image].ranked_labels

    def test_out_of_list_selection_appended_as_extra_group(self, tmp_path):
        from relabelkit.models import ProposalSet

        store, wf = build_workflow(tmp_path, n_images=1, k=30, proposals_per_image=7)
        image = "img_0000"
        long_list = wf.proposals()[image].ranked_labels
        a, b = wf.manifest.batches[0].assigned_annotators
        # Selected from a longer proposal list than the one later in force.
        wf.submit_annotation(a, image, INITIAL, {long_list[0], long_list[6]})
        wf.submit_annotation(b, image, INITIAL, {long_list[0]})
        store.write_proposals([ProposalSet.from_ranking(image, list(long_list[:5]))])
        wf._proposals = None
        _open_refinement(wf)
        prechecked, presentation = wf.build_refinement_presentation(image)
        assert long_list[6] in prechecked
        assert presentation.ranked_labels == long_list[:5] + (long_list[6],)
        assert presentation.groups[-1] == (long_list[6],)

    def test_edit_without_comment_rejected(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=2)
        _submit_initial_everywhere(
            wf, lambda image, idx, ps: {ps.ranked_labels[0], ps.ranked_labels[1 + idx]}
        )
        queue = _open_refinement(wf)
        image = queue[0]
        refiner = wf.refiner_of(image)
        prechecked, _ = wf.build_refinement_presentation(image)
        smaller = set(sorted(prechecked)[:1])
        with pytest.raises(MissingCommentError):
            wf.submit_annotation(refiner, image, REFINEMENT, smaller)
        rev = wf.submit_annotation(refiner, image, REFINEMENT, smaller, comment="dropped extras")
        assert rev == 1

    def test_confirming_prechecked_needs_no_comment(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=2)
        _submit_initial_everywhere(
            wf, lambda image, idx, ps: {ps.ranked_labels[0], ps.ranked_labels[1 + idx]}
        )
        queue = _open_refinement(wf)
        image = queue[0]
        refiner = wf.refiner_of(image)
        prechecked, _ = wf.build_refinement_presentation(image)
        assert wf.submit_annotation(refiner, image, REFINEMENT, prechecked) == 1

    def test_agreed_image_cannot_enter_refinement(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=2)
        # Unanimous selections containing the original label on every image.
        _submit_initial_everywhere(wf, lambda image, idx, ps: {ps.ranked_labels[0]})
        queue = _open_refinement(wf)
        assert queue == []
        with pytest.raises(NotAssignedError):
            wf.build_refinement_presentation("img_0000")

    def test_missing_submission_routes_to_refinement(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=1)
        image = "img_0000"
        a, _ = wf.manifest.batches[0].assigned_annotators
        wf.submit_annotation(a, image, INITIAL, {wf.proposals()[image].ranked_labels[0]})
        results, queue, missing = wf.analyze_agreement()
        assert missing == 1
        assert queue == [image]


class TestFinalizeAndTriage:
    def _agreed_and_refined(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=3, proposals_per_image=5)
        # img_0000: unanimous {original}; img_0001: disagreement; img_0002: both empty.
        def chooser(image, idx, ps):
            if image == "img_0000":
                return {ps.ranked_labels[0]}
            if image == "img_0001":
                return {ps.ranked_labels[0], ps.ranked_labels[1 + idx]}
            return set()

        _submit_initial_everywhere(wf, chooser)
        queue = _open_refinement(wf)
        assert queue == ["img_0001", "img_0002"]
        return store, wf, queue

    def test_agreed_image_keeps_unanimous_set(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=6)
        image = "img_0004"  # original label 4, proposals start at 4
        for annotator in wf.batch_of(image).assigned_annotators:
            wf.submit_annotation(annotator, image, INITIAL, {4})
        assert wf.finalize_labels(image).label_set == frozenset({4})

    def test_refined_image_takes_latest_refinement(self, tmp_path):
        store, wf, queue = self._agreed_and_refined(tmp_path)
        image = "img_0001"
        refiner = wf.refiner_of(image)
        target = {wf.proposals()[image].ranked_labels[0], wf.proposals()[image].ranked_labels[3]}
        wf.submit_annotation(refiner, image, REFINEMENT, target, comment="fixed")
        assert wf.finalize_labels(image).label_set == frozenset(target)

    def test_refined_empty_becomes_triage_eligible(self, tmp_path):
        store, wf, queue = self._agreed_and_refined(tmp_path)
        for image in queue:
            prechecked, _ = wf.build_refinement_presentation(image)
            refiner = wf.refiner_of(image)
            comment = "no valid label" if prechecked else None
            wf.submit_annotation(refiner, image, REFINEMENT, set(), comment=comment)
        finals = wf.finalize_all()
        store.write_final_labels(finals)
        wf.transition(WorkflowPhase.FINAL)
        assert wf.triage_queue() == ["img_0001", "img_0002"]
        record = wf.record_triage(
            "img_0002",
            QualityCategory.FINE_GRAINED_NEEDS_EXPERT,
            GtStance.UNCERTAIN,
            "e1",
        )
        assert wf.triage["img_0002"] == record

    def test_finalize_before_refinement_completes(self, tmp_path):
        store, wf, queue = self._agreed_and_refined(tmp_path)
        with pytest.raises(NotReadyError):
            wf.finalize_labels("img_0001")

    def test_finalize_is_deterministic_from_event_log(self, tmp_path):
        store, wf, queue = self._agreed_and_refined(tmp_path)
        for image in queue:
            refiner = wf.refiner_of(image)
            prechecked, _ = wf.build_refinement_presentation(image)
            wf.submit_annotation(
                refiner, image, REFINEMENT, set(), comment="cleared" if prechecked else None
            )
        first = {rec.image_id: rec.label_set for rec in wf.finalize_all()}
        replayed = Workflow(store)
        second = {rec.image_id: rec.label_set for rec in replayed.finalize_all()}
        assert first == second

    def test_triage_on_labeled_image_rejected(self, tmp_path):
        store, wf, queue = self._agreed_and_refined(tmp_path)
        for image in queue:
            refiner = wf.refiner_of(image)
            prechecked, _ = wf.build_refinement_presentation(image)
            wf.submit_annotation(
                refiner, image, REFINEMENT, set(), comment="cleared" if prechecked else None
            )
        store.write_final_labels(wf.finalize_all())
        wf.transition(WorkflowPhase.FINAL)
        with pytest.raises(ValidationError, match="only zero-label"):
            wf.record_triage(
                "img_0000", QualityCategory.NO_VALID_PROPOSAL, GtStance.AGREE, "e1"
            )

    def test_triage_requires_experienced_tier(self, tmp_path):
        store, wf, queue = self._agreed_and_refined(tmp_path)
        for image in queue:
            refiner = wf.refiner_of(image)
            prechecked, _ = wf.build_refinement_presentation(image)
            wf.submit_annotation(
                refiner, image, REFINEMENT, set(), comment="cleared" if prechecked else None
            )
        store.write_final_labels(wf.finalize_all())
        wf.transition(WorkflowPhase.FINAL)
        standard = [
            p.annotator_id
            for p in wf.manifest.roster
            if p.experience_tier is ExperienceTier.STANDARD
        ][0]
        with pytest.raises(NotAssignedError):
            wf.record_triage(
                "img_0002", QualityCategory.NO_VALID_PROPOSAL, GtStance.AGREE, standard
            )


class TestReplayAndCursor:
    def test_replay_rebuilds_state_exactly(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=4)
        _submit_initial_everywhere(
            wf, lambda image, idx, ps: set(ps.ranked_labels[: 1 + idx])
        )
        _open_refinement(wf)
        fresh = Workflow(store)
        assert fresh.phase == wf.phase
        assert fresh.submissions == wf.submissions
        assert fresh.manifest.refinement_slices == wf.manifest.refinement_slices

    def test_revisions_have_no_gaps(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=1)
        batch = wf.manifest.batches[0]
        annotator = batch.assigned_annotators[0]
        image = batch.image_ids[0]
        ps = wf.proposals()[image].ranked_labels
        for i in range(1, 5):
            wf.submit_annotation(annotator, image, INITIAL, set(ps[:i]))
        history = wf.submissions[(annotator, image, "initial")]
        assert [rec.revision for rec in history] == [1, 2, 3, 4]

    def test_event_log_sequence_is_monotone(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=3)
        _submit_initial_everywhere(wf, lambda image, idx, ps: {ps.ranked_labels[idx]})
        seqs = [json.loads(line)["seq"] for line in store.events_path.read_text().splitlines()]
        assert seqs == list(range(1, len(seqs) + 1))

    def test_torn_tail_line_is_ignored_on_replay(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=1)
        batch = wf.manifest.batches[0]
        wf.submit_annotation(batch.assigned_annotators[0], batch.image_ids[0], INITIAL, set())
        with open(store.events_path, "a", encoding="utf-8") as fh:
            fh.write('{"seq": 99, "type": "subm')  # interrupted write
        fresh = Workflow(store)
        assert fresh.submissions == wf.submissions
        assert fresh.log.next_seq == wf.log.next_seq

    def test_cursor_is_stable_and_advances_on_submission(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=4)
        batch = wf.manifest.batches[0]
        annotator = batch.assigned_annotators[0]
        image, stage, done, total = wf.next_task(annotator)
        assert (image, stage, done, total) == (batch.image_ids[0], INITIAL, 0, 4)
        assert wf.next_task(annotator)[0] == image  # stable without submission
        wf.submit_annotation(annotator, image, INITIAL, set())
        image2, _, done2, _ = wf.next_task(annotator)
        assert image2 == batch.image_ids[1]
        assert done2 == 1

    def test_cursor_none_when_slice_complete(self, tmp_path):
        store, wf = build_workflow(tmp_path, n_images=2)
        batch = wf.manifest.batches[0]
        annotator = batch.assigned_annotators[0]
        for image in batch.image_ids:
            wf.submit_annotation(annotator, image, INITIAL, set())
        image, _, done, total = wf.next_task(annotator)
        assert image is None
        assert (done, total) == (2, 2)


def test_refiner_overlap_with_initial_pool_is_reported(tmp_path):
    store, wf = build_workflow(tmp_path, n_images=4, num_batches=2)
    # Force disagreement everywhere so every image needs refinement.
    _submit_initial_everywhere(
        wf, lambda image, idx, ps: {ps.ranked_labels[idx], ps.ranked_labels[idx + 1]}
    )
    wf.transition(WorkflowPhase.ANALYSIS)
    _, queue, _ = wf.analyze_agreement()
    assert len(queue) == 4
    slices = wf.setup_refinement(queue)
    overlaps = wf.manifest.refinement_overlaps
    assert set(overlaps) == set(slices)
    for annotator_id, image_ids in slices.items():
        expected = sum(
            1
            for image_id in image_ids
            if annotator_id in wf.batch_of(image_id).assigned_annotators
        )
        assert overlaps[annotator_id] == expected
