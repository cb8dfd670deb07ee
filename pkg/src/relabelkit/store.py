"""Canonical on-disk store: catalog, image registry, predictions, label sets.

All artifacts are UTF-8 JSON-lines files. Writers emit a canonical form
(sorted keys, fixed separators, records in a deterministic order) and use
write-to-temp plus atomic rename, so identical inputs always produce
identical bytes and no partial ingest is ever visible.
"""

from __future__ import annotations

import json
import logging
import math
import os
from pathlib import Path
from typing import Iterable, Iterator

from .errors import (
    DuplicateIdError,
    NotReadyError,
    ParseError,
    UnknownIdError,
    ValidationError,
)
from .models import (
    ClassCatalog,
    ClassEntry,
    ImageRecord,
    MultiLabelGroundTruth,
    PredictionRecord,
    ProposalSet,
)

log = logging.getLogger(__name__)

EXPECTED_EXEMPLARS = 10


def canon_dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def read_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) pairs; raise ParseError with location on bad lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path.name}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise ParseError(f"{path.name}:{lineno}: expected an object per line")
            yield lineno, obj


def write_jsonl_atomic(path: Path, rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(canon_dumps(row))
            fh.write("\n")
    os.replace(tmp, path)


def write_json_atomic(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing field '{key}'")
    return obj[key]


# ---------------------------------------------------------------------------
# Loaders


def load_catalog(path: Path) -> ClassCatalog:
    """Parse a class-catalog file into a validated ClassCatalog.

    Records carry `class_id`, `name`, `synonyms` (array) and `exemplars`
    (array of references, normally 10). Ids must be exactly 0..K-1.
    """
    entries: list[ClassEntry] = []
    seen: set[int] = set()
    for lineno, obj in read_jsonl(path):
        where = f"{path.name}:{lineno}"
        class_id = _require(obj, "class_id", where)
        name = _require(obj, "name", where)
        if not isinstance(class_id, int) or isinstance(class_id, bool):
            raise ParseError(f"{where}: class_id must be an integer")
        if not isinstance(name, str) or not name:
            raise ValidationError(f"{where}: name must be a non-empty string", field="name")
        if class_id in seen:
            raise DuplicateIdError(f"{where}: duplicate class_id {class_id}", field="class_id")
        seen.add(class_id)
        synonyms = obj.get("synonyms", [])
        exemplars = obj.get("exemplars", [])
        if not isinstance(synonyms, list) or not all(isinstance(s, str) for s in synonyms):
            raise ParseError(f"{where}: synonyms must be an array of strings")
        if not isinstance(exemplars, list) or not all(isinstance(s, str) for s in exemplars):
            raise ParseError(f"{where}: exemplars must be an array of strings")
        if len(exemplars) != EXPECTED_EXEMPLARS:
            log.warning(
                "%s: class %s has %d exemplar refs (annotation screen expects %d)",
                where, class_id, len(exemplars), EXPECTED_EXEMPLARS,
            )
        entries.append(
            ClassEntry(
                class_id=class_id,
                name=name,
                synonyms=tuple(synonyms),
                exemplar_refs=tuple(exemplars),
            )
        )
    if not entries:
        raise ValidationError(f"{path.name}: catalog has no classes")
    k = len(entries)
    bad = [e.class_id for e in entries if not 0 <= e.class_id < k]
    if bad:
        raise ValidationError(
            f"{path.name}: class_ids must be exactly 0..{k - 1}, got out-of-range {bad}",
            field="class_id",
        )
    entries.sort(key=lambda e: e.class_id)
    return ClassCatalog(entries)


def load_image_registry(path: Path, catalog: ClassCatalog) -> dict[str, ImageRecord]:
    """Parse the image registry; preserves file order (it defines batch order)."""
    images: dict[str, ImageRecord] = {}
    for lineno, obj in read_jsonl(path):
        where = f"{path.name}:{lineno}"
        image_id = _require(obj, "image_id", where)
        uri = _require(obj, "uri", where)
        label = _require(obj, "original_label", where)
        if not isinstance(image_id, str) or not image_id:
            raise ParseError(f"{where}: image_id must be a non-empty string")
        if image_id in images:
            raise DuplicateIdError(f"{where}: duplicate image_id {image_id!r}", field="image_id")
        if not isinstance(label, int) or isinstance(label, bool) or label not in catalog:
            raise UnknownIdError(
                f"{where}: original_label {label!r} is not a catalog class", field="original_label"
            )
        images[image_id] = ImageRecord(image_id=image_id, uri=str(uri), original_label=label)
    if not images:
        raise ValidationError(f"{path.name}: image registry is empty")
    return images


def _validate_probs(probs, k: int, where: str) -> tuple[float, ...]:
    if not isinstance(probs, list):
        raise ParseError(f"{where}: probs must be an array")
    if len(probs) != k:
        raise ValidationError(
            f"{where}: probs has length {len(probs)}, catalog has {k} classes", field="probs"
        )
    out = []
    for value in probs:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ParseError(f"{where}: probs entries must be numbers")
        value = float(value)
        if not math.isfinite(value):
            raise ValidationError(f"{where}: probs entries must be finite", field="probs")
        if value < 0:
            raise ValidationError(f"{where}: negative score {value}", field="probs")
        out.append(value)
    return tuple(out)


def _validate_topk(topk, k: int, where: str) -> tuple[tuple[int, float], ...]:
    if not isinstance(topk, list) or not topk:
        raise ParseError(f"{where}: topk must be a non-empty array")
    out: list[tuple[int, float]] = []
    seen: set[int] = set()
    prev = math.inf
    for pair in topk:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ParseError(f"{where}: topk entries must be [class_id, score] pairs")
        class_id, score = pair
        if not isinstance(class_id, int) or isinstance(class_id, bool):
            raise ParseError(f"{where}: topk class_id must be an integer")
        if not 0 <= class_id < k:
            raise UnknownIdError(f"{where}: topk class_id {class_id} out of range", field="topk")
        if class_id in seen:
            raise DuplicateIdError(f"{where}: duplicate class_id {class_id} in topk", field="topk")
        seen.add(class_id)
        score = float(score)
        if not math.isfinite(score) or score < 0:
            raise ValidationError(f"{where}: negative or non-finite score {score}", field="topk")
        if score > prev:
            raise ValidationError(f"{where}: topk scores must be non-increasing", field="topk")
        prev = score
        out.append((class_id, score))
    return tuple(out)


def load_predictions(
    path: Path, catalog: ClassCatalog, images: dict[str, ImageRecord]
) -> list[PredictionRecord]:
    """Parse a predictions file; every record must reference a registered image."""
    records: list[PredictionRecord] = []
    for lineno, obj in read_jsonl(path):
        where = f"{path.name}:{lineno}"
        model_id = _require(obj, "model_id", where)
        image_id = _require(obj, "image_id", where)
        if image_id not in images:
            raise UnknownIdError(f"{where}: unknown image_id {image_id!r}", field="image_id")
        has_probs = "probs" in obj
        has_topk = "topk" in obj
        if has_probs == has_topk:
            raise ParseError(f"{where}: exactly one of 'probs' or 'topk' is required")
        if has_probs:
            records.append(
                PredictionRecord(
                    model_id=str(model_id),
                    image_id=image_id,
                    probs=_validate_probs(obj["probs"], catalog.k, where),
                )
            )
        else:
            records.append(
                PredictionRecord(
                    model_id=str(model_id),
                    image_id=image_id,
                    topk=_validate_topk(obj["topk"], catalog.k, where),
                )
            )
    return records


def load_label_sets(
    path: Path,
    catalog: ClassCatalog,
    images: dict[str, ImageRecord] | None = None,
) -> dict[str, frozenset[int]]:
    """Parse a multi-label ground-truth file into image_id -> label set.

    Empty label arrays are legal (zero-label images exist by design).
    """
    out: dict[str, frozenset[int]] = {}
    for lineno, obj in read_jsonl(path):
        where = f"{path.name}:{lineno}"
        image_id = _require(obj, "image_id", where)
        labels = _require(obj, "labels", where)
        if image_id in out:
            raise DuplicateIdError(f"{where}: duplicate image_id {image_id!r}", field="image_id")
        if images is not None and image_id not in images:
            raise UnknownIdError(f"{where}: unknown image_id {image_id!r}", field="image_id")
        if not isinstance(labels, list):
            raise ParseError(f"{where}: labels must be an array")
        for lbl in labels:
            if not isinstance(lbl, int) or isinstance(lbl, bool) or lbl not in catalog:
                raise UnknownIdError(f"{where}: label {lbl!r} is not a catalog class", field="labels")
        out[image_id] = frozenset(labels)
    return out


# ---------------------------------------------------------------------------
# Exporters (round-trip with the loaders above)


def catalog_rows(catalog: ClassCatalog) -> list[dict]:
    return [
        {
            "class_id": e.class_id,
            "name": e.name,
            "synonyms": list(e.synonyms),
            "exemplars": list(e.exemplar_refs),
        }
        for e in catalog
    ]


def registry_rows(images: dict[str, ImageRecord]) -> list[dict]:
    return [
        {"image_id": rec.image_id, "uri": rec.uri, "original_label": rec.original_label}
        for rec in images.values()
    ]


def prediction_rows(records: Iterable[PredictionRecord]) -> list[dict]:
    rows = []
    for rec in sorted(records, key=lambda r: (r.model_id, r.image_id)):
        row: dict = {"model_id": rec.model_id, "image_id": rec.image_id}
        if rec.probs is not None:
            row["probs"] = list(rec.probs)
        else:
            row["topk"] = [[c, s] for c, s in rec.topk]
        rows.append(row)
    return rows


def label_set_rows(labels: dict[str, frozenset[int]]) -> list[dict]:
    return [
        {"image_id": image_id, "labels": sorted(labels[image_id])}
        for image_id in sorted(labels)
    ]


def _not_ready(what: str) -> NotReadyError:
    return NotReadyError(f"{what} not available in store; run the earlier pipeline stage first")


# ---------------------------------------------------------------------------
# The store itself


class DatasetStore:
    """Filesystem layout for one relabeling run.

    Ingestion is single-writer and all-or-nothing per file: inputs are fully
    parsed and validated before the canonical artifact is atomically
    replaced. Reads always see the last committed snapshot.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.catalog_path = self.root / "catalog.jsonl"
        self.images_path = self.root / "images.jsonl"
        self.predictions_dir = self.root / "predictions"
        self.reference_labels_path = self.root / "reference_labels.jsonl"
        self.proposals_path = self.root / "proposals.jsonl"
        self.final_labels_path = self.root / "final_labels.jsonl"
        self.manifest_path = self.root / "manifest.json"
        self.events_path = self.root / "events.jsonl"
        self.queue_path = self.root / "refinement_queue.jsonl"
        self.reports_dir = self.root / "reports"
        self._catalog: ClassCatalog | None = None
        self._images: dict[str, ImageRecord] | None = None
        self._predictions: dict[str, dict[str, PredictionRecord]] = {}

    # -- ingestion ---------------------------------------------------------

    def ingest_catalog(self, src: Path) -> ClassCatalog:
        catalog = load_catalog(Path(src))
        write_jsonl_atomic(self.catalog_path, catalog_rows(catalog))
        self._catalog = catalog
        return catalog

    def ingest_images(self, src: Path) -> dict[str, ImageRecord]:
        images = load_image_registry(Path(src), self.catalog())
        write_jsonl_atomic(self.images_path, registry_rows(images))
        self._images = images
        return images

    def ingest_predictions(self, src: Path) -> list[str]:
        """Ingest one predictions file; returns the model ids it contained.

        Records are keyed by (model_id, image_id); a key that already exists
        is replaced whole (a warning is logged). Re-ingesting an identical
        file leaves the canonical store byte-identical.
        """
        records = load_predictions(Path(src), self.catalog(), self.images())
        per_model: dict[str, dict[str, PredictionRecord]] = {}
        for rec in records:
            per_model.setdefault(rec.model_id, {})
            if rec.image_id in per_model[rec.model_id]:
                raise DuplicateIdError(
                    f"{Path(src).name}: duplicate ({rec.model_id}, {rec.image_id})"
                )
            per_model[rec.model_id][rec.image_id] = rec
        for model_id, incoming in per_model.items():
            existing = self.predictions(model_id) if self.has_model(model_id) else {}
            conflicts = set(existing) & set(incoming)
            if conflicts:
                log.warning(
                    "replacing %d existing prediction(s) for model %s",
                    len(conflicts), model_id,
                )
            merged = dict(existing)
            merged.update(incoming)
            write_jsonl_atomic(
                self.predictions_dir / f"{model_id}.jsonl", prediction_rows(merged.values())
            )
            self._predictions[model_id] = merged
        return sorted(per_model)

    def ingest_reference_labels(self, src: Path) -> dict[str, frozenset[int]]:
        labels = load_label_sets(Path(src), self.catalog(), self.images())
        write_jsonl_atomic(self.reference_labels_path, label_set_rows(labels))
        return labels

    # -- readers -----------------------------------------------------------

    def catalog(self) -> ClassCatalog:
        if self._catalog is None:
            if not self.catalog_path.exists():
                raise _not_ready("catalog")
            self._catalog = load_catalog(self.catalog_path)
        return self._catalog

    def images(self) -> dict[str, ImageRecord]:
        if self._images is None:
            if not self.images_path.exists():
                raise _not_ready("image registry")
            self._images = load_image_registry(self.images_path, self.catalog())
        return self._images

    def has_model(self, model_id: str) -> bool:
        return model_id in self._predictions or (
            self.predictions_dir / f"{model_id}.jsonl"
        ).exists()

    def model_ids(self) -> list[str]:
        if not self.predictions_dir.exists():
            return sorted(self._predictions)
        on_disk = {p.stem for p in self.predictions_dir.glob("*.jsonl")}
        return sorted(on_disk | set(self._predictions))

    def predictions(self, model_id: str) -> dict[str, PredictionRecord]:
        if model_id not in self._predictions:
            path = self.predictions_dir / f"{model_id}.jsonl"
            if not path.exists():
                raise UnknownIdError(f"no predictions ingested for model {model_id!r}")
            recs = load_predictions(path, self.catalog(), self.images())
            self._predictions[model_id] = {r.image_id: r for r in recs}
        return self._predictions[model_id]

    def reference_labels(self) -> dict[str, frozenset[int]]:
        if not self.reference_labels_path.exists():
            raise _not_ready("reference labels")
        return load_label_sets(self.reference_labels_path, self.catalog(), self.images())

    # -- proposals and final labels ----------------------------------------

    def write_proposals(self, proposals: Iterable[ProposalSet]) -> None:
        rows = [
            {"image_id": p.image_id, "proposals": list(p.ranked_labels)}
            for p in sorted(proposals, key=lambda p: p.image_id)
        ]
        write_jsonl_atomic(self.proposals_path, rows)

    def load_proposals(self) -> dict[str, ProposalSet]:
        if not self.proposals_path.exists():
            raise _not_ready("proposals")
        out: dict[str, ProposalSet] = {}
        k = self.catalog().k
        for lineno, obj in read_jsonl(self.proposals_path):
            where = f"{self.proposals_path.name}:{lineno}"
            image_id = _require(obj, "image_id", where)
            ranked = _require(obj, "proposals", where)
            if image_id in out:
                raise DuplicateIdError(f"{where}: duplicate image_id {image_id!r}")
            if len(set(ranked)) != len(ranked) or any(not 0 <= c < k for c in ranked):
                raise ValidationError(f"{where}: proposals must be distinct catalog classes")
            out[image_id] = ProposalSet.from_ranking(image_id, ranked)
        return out

    def write_final_labels(self, labels: Iterable[MultiLabelGroundTruth]) -> None:
        as_map = {rec.image_id: rec.label_set for rec in labels}
        write_jsonl_atomic(self.final_labels_path, label_set_rows(as_map))

    def final_labels(self) -> dict[str, frozenset[int]]:
        if not self.final_labels_path.exists():
            raise _not_ready("final labels")
        return load_label_sets(self.final_labels_path, self.catalog(), self.images())
