"""Report serialization: CSV and JSON artifacts with fixed column orders.

Column orders are part of the platform contract (golden-file tests depend
on them):

* leaderboard.csv:        model_id, real_accuracy, top1_accuracy, n_evaluated
* heatmap.csv:            model_id, label_count, accuracy, half_width, n
* distribution.csv:       label_count, count, fraction
* regression_points.csv:  model_id, top1_accuracy, real_accuracy, residual, outlier
* agreement.csv:          image_id, status, reason

Undefined heatmap values serialize as empty CSV cells / JSON nulls.
Percent strings are formatted here only (2 decimals, round half-up);
stored numbers stay as fractions in [0, 1].
"""

from __future__ import annotations

import csv
import io
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable

from .metrics import distribution_rollup, regression_residuals
from .models import (
    AgreementResult,
    AgreementSummary,
    HeatmapCell,
    LabelCountDistribution,
    ModelScore,
    TriageReportData,
    ZooEvaluation,
)
from .store import write_json_atomic


def format_percent(fraction: float) -> str:
    """Render a fraction in [0,1] as a percent string with 2 decimals, half-up."""
    return str((Decimal(str(fraction)) * 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _write_csv_atomic(path: Path, header: list[str], rows: Iterable[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    tmp.replace(path)


def write_leaderboard_csv(path: Path, scores: Iterable[ModelScore]) -> None:
    _write_csv_atomic(
        path,
        ["model_id", "real_accuracy", "top1_accuracy", "n_evaluated"],
        [[s.model_id, repr(s.real_accuracy), repr(s.top1_accuracy), s.n_evaluated] for s in scores],
    )


def write_heatmap_csv(path: Path, cells: Iterable[HeatmapCell]) -> None:
    _write_csv_atomic(
        path,
        ["model_id", "label_count", "accuracy", "half_width", "n"],
        [
            [
                c.model_id,
                c.label_count,
                None if c.accuracy is None else repr(c.accuracy),
                None if c.half_width is None else repr(c.half_width),
                c.n,
            ]
            for c in cells
        ],
    )


def write_distribution_json(path: Path, dist: LabelCountDistribution) -> None:
    rollup_counts = distribution_rollup(dist)
    write_json_atomic(
        path,
        {
            "n_total": dist.n_total,
            "counts": {str(k): v for k, v in dist.counts.items()},
            "fractions": {str(k): v for k, v in dist.fractions.items()},
            "percent": {str(k): format_percent(v) for k, v in dist.fractions.items()},
            "multi_label_fraction": dist.multi_label_fraction,
            "multi_label_percent": format_percent(dist.multi_label_fraction),
            "rollup_counts": rollup_counts,
            "rollup_fractions": {k: v / dist.n_total for k, v in rollup_counts.items()},
        },
    )


def write_distribution_csv(path: Path, dist: LabelCountDistribution) -> None:
    _write_csv_atomic(
        path,
        ["label_count", "count", "fraction"],
        [[k, dist.counts[k], repr(dist.fractions[k])] for k in sorted(dist.counts)],
    )


def write_regression_json(path: Path, zoo: ZooEvaluation) -> None:
    write_json_atomic(
        path,
        {
            "slope": zoo.fit.slope,
            "intercept": zoo.fit.intercept,
            "r_squared": zoo.fit.r_squared,
            "n_points": zoo.fit.n_points,
            "residual_sd": zoo.residual_sd,
            "outliers": zoo.outliers,
        },
    )


def write_regression_points_csv(path: Path, zoo: ZooEvaluation) -> None:
    residuals = regression_residuals(zoo.fit, [(t, r) for _, t, r in zoo.points])
    flagged = set(zoo.outliers)
    _write_csv_atomic(
        path,
        ["model_id", "top1_accuracy", "real_accuracy", "residual", "outlier"],
        [
            [model_id, repr(t), repr(r), repr(res), str(model_id in flagged).lower()]
            for (model_id, t, r), res in zip(zoo.points, residuals)
        ],
    )


def write_agreement_csv(path: Path, results: Iterable[AgreementResult]) -> None:
    _write_csv_atomic(
        path,
        ["image_id", "status", "reason"],
        [[r.image_id, r.status.value, r.reason.value] for r in results],
    )


def write_agreement_summary_json(path: Path, summary: AgreementSummary) -> None:
    payload: dict = {
        "n_total": summary.n_total,
        "n_agreed": summary.n_agreed,
        "n_needs_refinement": summary.n_needs_refinement,
        "by_reason": summary.by_reason,
        "n_missing_submissions": summary.n_missing_submissions,
    }
    if summary.n_total:
        payload["fractions"] = summary.fractions
        payload["percent"] = {k: format_percent(v) for k, v in summary.fractions.items()}
    write_json_atomic(path, payload)


def write_triage_json(path: Path, report: TriageReportData) -> None:
    write_json_atomic(
        path,
        {
            "n": report.n,
            "quality_categories": {
                "counts": report.category_counts,
                "fractions": report.category_fractions,
                "percent": {k: format_percent(v) for k, v in report.category_fractions.items()},
            },
            "gt_stances": {
                "counts": report.stance_counts,
                "fractions": report.stance_fractions,
                "percent": {k: format_percent(v) for k, v in report.stance_fractions.items()},
            },
        },
    )

