"""Domain types used across the platform.

Everything here is a plain immutable-ish dataclass; validation that needs
catalog or registry context lives in the loaders (`store`) and services
(`workflow`), not in the constructors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class ExperienceTier(str, enum.Enum):
    STANDARD = "standard"
    EXPERIENCED = "experienced"


class AnnotationStage(str, enum.Enum):
    INITIAL = "initial"
    REFINEMENT = "refinement"


class WorkflowPhase(str, enum.Enum):
    """Global workflow state machine: setup -> initial -> analysis -> refinement -> final."""

    SETUP = "setup"
    INITIAL = "initial"
    ANALYSIS = "analysis"
    REFINEMENT = "refinement"
    FINAL = "final"


PHASE_ORDER = [
    WorkflowPhase.SETUP,
    WorkflowPhase.INITIAL,
    WorkflowPhase.ANALYSIS,
    WorkflowPhase.REFINEMENT,
    WorkflowPhase.FINAL,
]


class AgreementStatus(str, enum.Enum):
    AGREED = "agreed"
    NEEDS_REFINEMENT = "needs_refinement"


class AgreementReason(str, enum.Enum):
    UNANIMOUS_WITH_ORIGINAL = "unanimous_with_original"
    LABEL_SETS_DIFFER = "label_sets_differ"
    ORIGINAL_LABEL_MISSING = "original_label_missing"
    BOTH = "both"


class QualityCategory(str, enum.Enum):
    NO_VALID_PROPOSAL = "no_valid_proposal"
    LOW_RESOLUTION_AMBIGUOUS = "low_resolution_ambiguous"
    FINE_GRAINED_NEEDS_EXPERT = "fine_grained_needs_expert"
    UNCOMMON_OR_ATYPICAL_VIEWPOINT = "uncommon_or_atypical_viewpoint"


class GtStance(str, enum.Enum):
    AGREE = "agree"
    DISAGREE = "disagree"
    UNCERTAIN = "uncertain"


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    synonyms: tuple[str, ...] = ()
    exemplar_refs: tuple[str, ...] = ()


class ClassCatalog:
    """Indexed collection of the K classes."""

    def __init__(self, entries: list[ClassEntry]):
        self.entries = list(entries)
        self.by_id = {e.class_id: e for e in self.entries}

    @property
    def k(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, class_id: int) -> bool:
        return class_id in self.by_id


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    uri: str
    original_label: int


@dataclass(frozen=True)
class PredictionRecord:
    """Per (model, image) scores: either a dense vector or a ranked top-k list."""

    model_id: str
    image_id: str
    probs: tuple[float, ...] | None = None
    topk: tuple[tuple[int, float], ...] | None = None


@dataclass(frozen=True)
class MultiLabelGroundTruth:
    image_id: str
    label_set: frozenset[int]


GROUP_SIZE = 5


@dataclass(frozen=True)
class ProposalSet:
    """Ordered label proposals for one image, partitioned into groups of five."""

    image_id: str
    ranked_labels: tuple[int, ...]
    groups: tuple[tuple[int, ...], ...]

    @classmethod
    def from_ranking(cls, image_id: str, ranked: list[int] | tuple[int, ...]) -> "ProposalSet":
        ranked = tuple(ranked)
        groups = tuple(
            ranked[g : g + GROUP_SIZE] for g in range(0, len(ranked), GROUP_SIZE)
        )
        return cls(image_id=image_id, ranked_labels=ranked, groups=groups)

    @property
    def label_set(self) -> frozenset[int]:
        return frozenset(self.ranked_labels)


@dataclass(frozen=True)
class ModelScore:
    model_id: str
    real_accuracy: float
    top1_accuracy: float
    n_evaluated: int


@dataclass(frozen=True)
class AnnotatorProfile:
    annotator_id: str
    experience_tier: ExperienceTier = ExperienceTier.STANDARD
    access_key: str | None = None


@dataclass(frozen=True)
class Batch:
    batch_id: int
    image_ids: tuple[str, ...]
    assigned_annotators: tuple[str, ...]


@dataclass(frozen=True)
class AnnotationRecord:
    annotator_id: str
    image_id: str
    stage: AnnotationStage
    selected_labels: frozenset[int]
    comment: str | None
    revision: int
    submitted_at: str


@dataclass(frozen=True)
class TriageRecord:
    image_id: str
    quality_category: QualityCategory
    gt_stance: GtStance
    annotator_id: str


@dataclass(frozen=True)
class AgreementResult:
    image_id: str
    status: AgreementStatus
    reason: AgreementReason
    annotator_sets: tuple[frozenset[int], ...]


@dataclass
class LabelCountDistribution:
    counts: dict[int, int]
    fractions: dict[int, float]
    n_total: int
    multi_label_fraction: float  # share of images with >= 2 labels


@dataclass(frozen=True)
class HeatmapCell:
    model_id: str
    label_count: int
    accuracy: float | None
    half_width: float | None
    n: int


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


@dataclass
class AgreementSummary:
    n_total: int
    n_agreed: int
    n_needs_refinement: int
    by_reason: dict[str, int]
    n_missing_submissions: int = 0

    @property
    def fractions(self) -> dict[str, float]:
        if self.n_total == 0:
            return {}
        return {
            "agreed": self.n_agreed / self.n_total,
            "needs_refinement": self.n_needs_refinement / self.n_total,
        }


@dataclass
class TriageReportData:
    n: int
    category_counts: dict[str, int]
    category_fractions: dict[str, float]
    stance_counts: dict[str, int]
    stance_fractions: dict[str, float]


@dataclass
class ZooEvaluation:
    scores: list[ModelScore]
    fit: RegressionFit
    points: list[tuple[str, float, float]]  # (model_id, top1, real)
    outliers: list[str] = field(default_factory=list)
    residual_sd: float = 0.0
