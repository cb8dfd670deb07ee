"""Agreement predicate over initial annotations and refinement-queue construction.

An image is exempt from refinement only when every annotator produced the
same label set and that common set contains the originally provided
ground-truth label. Everything else is routed to refinement, with a reason
recorded for reporting.
"""

from __future__ import annotations

from collections import Counter
from typing import AbstractSet, Iterable, Sequence

from .errors import DuplicateIdError, ValidationError
from .models import (
    AgreementReason,
    AgreementResult,
    AgreementStatus,
    AgreementSummary,
)


def check_agreement(
    sets: Sequence[AbstractSet[int]], original_label: int, image_id: str = ""
) -> AgreementResult:
    """Apply the agreement condition to one image's annotator label sets.

    agreed requires identical sets across annotators and the original label
    inside the common set. Identical empty sets therefore always need
    refinement (reason: original_label_missing). Differing sets report
    label_sets_differ, or `both` when additionally no set contains the
    original label.
    """
    if not sets:
        raise ValidationError("at least one annotator label set is required")
    frozen = tuple(frozenset(s) for s in sets)
    first = frozen[0]
    identical = all(s == first for s in frozen)
    if identical:
        if original_label in first:
            status, reason = AgreementStatus.AGREED, AgreementReason.UNANIMOUS_WITH_ORIGINAL
        else:
            status, reason = AgreementStatus.NEEDS_REFINEMENT, AgreementReason.ORIGINAL_LABEL_MISSING
    else:
        if any(original_label in s for s in frozen):
            status, reason = AgreementStatus.NEEDS_REFINEMENT, AgreementReason.LABEL_SETS_DIFFER
        else:
            status, reason = AgreementStatus.NEEDS_REFINEMENT, AgreementReason.BOTH
    return AgreementResult(image_id=image_id, status=status, reason=reason, annotator_sets=frozen)


def build_refinement_queue(
    results: Iterable[AgreementResult],
) -> tuple[list[str], AgreementSummary]:
    """Collect images needing refinement, in stable image_id order.

    Returns the queue and summary counts. Exactly one result per image is
    required.
    """
    seen: set[str] = set()
    queue: list[str] = []
    by_reason: Counter[str] = Counter()
    n_agreed = 0
    n_total = 0
    for res in results:
        if res.image_id in seen:
            raise DuplicateIdError(f"duplicate agreement result for image {res.image_id!r}")
        seen.add(res.image_id)
        n_total += 1
        by_reason[res.reason.value] += 1
        if res.status is AgreementStatus.AGREED:
            n_agreed += 1
        else:
            queue.append(res.image_id)
    queue.sort()
    summary = AgreementSummary(
        n_total=n_total,
        n_agreed=n_agreed,
        n_needs_refinement=len(queue),
        by_reason=dict(sorted(by_reason.items())),
    )
    return queue, summary
