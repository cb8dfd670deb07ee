"""Label-proposal generation and the accuracy metrics used to pick the model.

The proposal model is chosen by its accuracy against a multi-label
reference: a top-1 prediction counts as correct when it belongs to the
image's label set. Only the ranking of scores matters anywhere in this
module, so callers may feed probabilities, logits, or any monotone
transform of either.
"""

from __future__ import annotations

from typing import AbstractSet, Mapping, Sequence

import numpy as np

from .errors import (
    CoverageMismatchError,
    UndefinedMetricError,
    ValidationError,
)
from .models import ModelScore, PredictionRecord, ProposalSet

DEFAULT_K = 20


def rank_classes(scores: Sequence[float]) -> list[int]:
    """Full ranking of class ids by descending score, ties by ascending id."""
    arr = np.asarray(scores, dtype=np.float64)
    # lexsort uses the last key as primary; index order breaks score ties.
    order = np.lexsort((np.arange(arr.size), -arr))
    return order.tolist()


def top1_of(pred: PredictionRecord) -> int:
    """Highest-ranked class of one prediction record."""
    if pred.probs is not None:
        if len(pred.probs) == 0:
            raise ValidationError("empty probability vector")
        return rank_classes(pred.probs)[0]
    assert pred.topk is not None
    ranked = sorted(pred.topk, key=lambda cs: (-cs[1], cs[0]))
    return ranked[0][0]


def generate_proposals(pred: PredictionRecord, k: int = DEFAULT_K) -> ProposalSet:
    """Build the ordered top-k proposal set for one image.

    Ranking is by descending score with ties broken by ascending class id;
    the result is partitioned into groups of five in rank order. When k
    exceeds the number of classes, all classes are proposed.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if pred.probs is not None:
        if len(pred.probs) == 0:
            raise ValidationError("empty probability vector")
        take = min(k, len(pred.probs))
        ranked = rank_classes(pred.probs)[:take]
    else:
        assert pred.topk is not None
        entries = sorted(pred.topk, key=lambda cs: (-cs[1], cs[0]))
        if len(entries) < k:
            # A ranked-topk record can only serve proposals it actually carries.
            raise ValidationError(
                f"ranked list for {pred.image_id!r} has {len(entries)} entries, k={k} requested"
            )
        ranked = [c for c, _ in entries[:k]]
    return ProposalSet.from_ranking(pred.image_id, ranked)


def real_accuracy(
    top1: Mapping[str, int],
    label_sets: Mapping[str, AbstractSet[int]],
    count_empty_as_wrong: bool = False,
) -> float:
    """Fraction of images whose top-1 prediction is in the image's label set.

    Images with an empty label set are excluded from both numerator and
    denominator unless count_empty_as_wrong is set, which keeps them in the
    denominator for sensitivity analysis.
    """
    missing = [i for i in label_sets if i not in top1]
    if missing:
        raise CoverageMismatchError(
            f"{len(missing)} image(s) have ground truth but no prediction, e.g. {missing[0]!r}"
        )
    hits = 0
    denom = 0
    for image_id, labels in label_sets.items():
        if not labels and not count_empty_as_wrong:
            continue
        denom += 1
        if top1[image_id] in labels:
            hits += 1
    if denom == 0:
        raise UndefinedMetricError("no images with a non-empty label set to evaluate")
    return hits / denom


def real_accuracy_denominator(
    label_sets: Mapping[str, AbstractSet[int]], count_empty_as_wrong: bool = False
) -> int:
    if count_empty_as_wrong:
        return len(label_sets)
    return sum(1 for labels in label_sets.values() if labels)


def top1_accuracy(top1: Mapping[str, int], originals: Mapping[str, int]) -> float:
    """Fraction of images whose top-1 prediction equals the original single label."""
    if not originals:
        raise UndefinedMetricError("no images to evaluate")
    if set(top1) != set(originals):
        raise CoverageMismatchError("prediction and original-label image sets differ")
    hits = sum(1 for image_id, label in originals.items() if top1[image_id] == label)
    return hits / len(originals)


def score_model(
    model_id: str,
    top1: Mapping[str, int],
    label_sets: Mapping[str, AbstractSet[int]],
    originals: Mapping[str, int],
    count_empty_as_wrong: bool = False,
) -> ModelScore:
    return ModelScore(
        model_id=model_id,
        real_accuracy=real_accuracy(top1, label_sets, count_empty_as_wrong),
        top1_accuracy=top1_accuracy(top1, originals),
        n_evaluated=real_accuracy_denominator(label_sets, count_empty_as_wrong),
    )


def select_model(
    candidates: Sequence[tuple[str, Mapping[str, int]]],
    label_sets: Mapping[str, AbstractSet[int]],
    originals: Mapping[str, int],
    count_empty_as_wrong: bool = False,
) -> ModelScore:
    """Pick the candidate with the highest multi-label accuracy.

    All candidates must cover the same image set. Ties go to the
    lexicographically smallest model_id so selection is reproducible.
    """
    if not candidates:
        raise ValidationError("no candidate models supplied")
    ids = [model_id for model_id, _ in candidates]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate model_id among candidates")
    coverage = set(candidates[0][1])
    for model_id, preds in candidates[1:]:
        if set(preds) != coverage:
            raise CoverageMismatchError(f"model {model_id!r} covers a different image set")
    scored = [
        score_model(model_id, preds, label_sets, originals, count_empty_as_wrong)
        for model_id, preds in candidates
    ]
    return min(scored, key=lambda s: (-s.real_accuracy, s.model_id))


def top1_map(predictions: Mapping[str, PredictionRecord]) -> dict[str, int]:
    """Collapse per-image prediction records to their top-1 class."""
    return {image_id: top1_of(rec) for image_id, rec in predictions.items()}
