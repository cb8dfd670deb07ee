"""Statistics over finalized labels: distributions, heatmaps, regression, triage.

All fractions are kept in [0, 1]; formatting to percent strings happens in
the report writers only.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import AbstractSet, Iterable, Mapping, Sequence

from .errors import (
    CoverageMismatchError,
    DegenerateInputError,
    UndefinedMetricError,
    ValidationError,
)
from .models import (
    HeatmapCell,
    LabelCountDistribution,
    RegressionFit,
    TriageRecord,
    TriageReportData,
    ZooEvaluation,
)
from .proposals import score_model

Z_95 = 1.96


def label_count_distribution(
    label_sets: Mapping[str, AbstractSet[int]]
) -> LabelCountDistribution:
    """Bucket images by how many labels they ended up with."""
    if not label_sets:
        raise UndefinedMetricError("no finalized labels to summarize")
    counts = Counter(len(labels) for labels in label_sets.values())
    n_total = len(label_sets)
    fractions = {c: counts[c] / n_total for c in counts}
    multi = sum(n for c, n in counts.items() if c >= 2) / n_total
    return LabelCountDistribution(
        counts=dict(sorted(counts.items())),
        fractions=dict(sorted(fractions.items())),
        n_total=n_total,
        multi_label_fraction=multi,
    )


def distribution_rollup(dist: LabelCountDistribution) -> dict[str, int]:
    """Counts with every bucket >= 3 collapsed into one '3+' bucket."""
    rolled: dict[str, int] = {}
    for count, n in dist.counts.items():
        key = str(count) if count < 3 else "3+"
        rolled[key] = rolled.get(key, 0) + n
    return rolled


def margin_of_error(p: float, n: int, as_written: bool = False) -> float | None:
    """Half-width of the 95% confidence interval for a proportion.

    Returns None (an undefined cell) when n <= 1. The default is the Wald
    half-width 1.96 * sqrt(p(1-p)/n); `as_written` divides by a second
    sqrt(n) to reproduce the alternative published composition of the two
    formulas.
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"proportion must be in [0, 1], got {p}")
    if n <= 1:
        return None
    half = Z_95 * math.sqrt(p * (1.0 - p) / n)
    if as_written:
        half /= math.sqrt(n)
    return half


def accuracy_by_label_count(
    model_id: str,
    top1: Mapping[str, int],
    label_sets: Mapping[str, AbstractSet[int]],
    originals: Mapping[str, int],
    as_written: bool = False,
) -> list[HeatmapCell]:
    """Per label-count top-1 accuracy against the original labels, with
    confidence half-widths.

    Cells cover label counts 0..max observed so heatmap rows align across
    models; cells with n <= 1 carry undefined accuracy and half-width.
    """
    if not label_sets:
        raise UndefinedMetricError("no finalized labels to group by")
    for image_id in label_sets:
        if image_id not in top1 or image_id not in originals:
            raise CoverageMismatchError(f"image {image_id!r} missing prediction or original label")
    groups: dict[int, list[str]] = {}
    for image_id, labels in label_sets.items():
        groups.setdefault(len(labels), []).append(image_id)
    cells: list[HeatmapCell] = []
    for count in range(max(groups) + 1):
        members = groups.get(count, [])
        n = len(members)
        if n <= 1:
            cells.append(HeatmapCell(model_id, count, None, None, n))
            continue
        correct = sum(1 for i in members if top1[i] == originals[i])
        acc = correct / n
        cells.append(HeatmapCell(model_id, count, acc, margin_of_error(acc, n, as_written), n))
    return cells


def ols_regression(points: Sequence[tuple[float, float]]) -> RegressionFit:
    """Least-squares line through (x, y) points with r_squared = 1 - SS_res/SS_tot.

    Noiseless affine data (including a horizontal line) yields r_squared 1.
    """
    n = len(points)
    if n < 2:
        raise UndefinedMetricError(f"regression needs at least 2 points, got {n}")
    xs = [float(x) for x, _ in points]
    ys = [float(y) for _, y in points]
    x_mean = sum(xs) / n
    y_mean = sum(ys) / n
    sxx = sum((x - x_mean) ** 2 for x in xs)
    if sxx == 0.0:
        raise DegenerateInputError("all x values are equal; slope is undefined")
    sxy = sum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - y_mean) ** 2 for y in ys)
    # With an intercept, ss_res <= ss_tot holds exactly; the clamp only
    # absorbs float roundoff on (near-)constant y.
    r_squared = 1.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RegressionFit(slope=slope, intercept=intercept, r_squared=r_squared, n_points=n)


def regression_residuals(
    fit: RegressionFit, points: Sequence[tuple[float, float]]
) -> list[float]:
    return [y - (fit.slope * x + fit.intercept) for x, y in points]


def evaluate_model_zoo(
    models: Sequence[tuple[str, Mapping[str, int]]],
    label_sets: Mapping[str, AbstractSet[int]],
    originals: Mapping[str, int],
    count_empty_as_wrong: bool = False,
    outlier_sd_factor: float = 2.0,
) -> ZooEvaluation:
    """Score every model and regress multi-label accuracy on top-1 accuracy.

    The leaderboard is sorted by descending multi-label accuracy (ties by
    model_id) and is independent of input order. Models whose regression
    residual exceeds `outlier_sd_factor` times the residual standard error
    are flagged for scrutiny.
    """
    if not models:
        raise ValidationError("no models to evaluate")
    expected = set(label_sets)
    for model_id, preds in models:
        if set(preds) != expected:
            raise CoverageMismatchError(f"model {model_id!r} does not cover the image set")
    scores = [
        score_model(model_id, preds, label_sets, originals, count_empty_as_wrong)
        for model_id, preds in models
    ]
    scores.sort(key=lambda s: (-s.real_accuracy, s.model_id))
    points = [(s.model_id, s.top1_accuracy, s.real_accuracy) for s in scores]
    fit = ols_regression([(t, r) for _, t, r in points])
    residuals = regression_residuals(fit, [(t, r) for _, t, r in points])
    outliers: list[str] = []
    residual_sd = 0.0
    if len(points) > 2:
        residual_sd = math.sqrt(sum(r * r for r in residuals) / (len(points) - 2))
        if residual_sd > 0:
            outliers = [
                model_id
                for (model_id, _, _), res in zip(points, residuals)
                if abs(res) > outlier_sd_factor * residual_sd
            ]
    return ZooEvaluation(
        scores=scores, fit=fit, points=points, outliers=outliers, residual_sd=residual_sd
    )


def triage_report(records: Iterable[TriageRecord]) -> TriageReportData:
    """Raw counts and fractions per quality category and per ground-truth stance."""
    records = list(records)
    if not records:
        raise UndefinedMetricError("no triage records")
    n = len(records)
    cat_counts = Counter(rec.quality_category.value for rec in records)
    stance_counts = Counter(rec.gt_stance.value for rec in records)
    return TriageReportData(
        n=n,
        category_counts=dict(sorted(cat_counts.items())),
        category_fractions={k: v / n for k, v in sorted(cat_counts.items())},
        stance_counts=dict(sorted(stance_counts.items())),
        stance_fractions={k: v / n for k, v in sorted(stance_counts.items())},
    )
