"""HTTP surface for annotators and operators.

Endpoints (paths are fixed; the browser UI depends on them):

    POST /api/login                       -> {token, annotator_id, experience_tier}
    GET  /api/tasks/next                  -> {task: AnnotationTask | null}
    POST /api/annotations                 -> {revision}
    GET  /api/labels/{class_id}/exemplars -> {class_id, name, exemplars}
    POST /api/triage                      -> {image_id, stored}
    GET  /api/reports/{kind}              -> report document (CSV or JSON)
    POST /api/admin/stage                 -> run a stage transition (X-Admin-Key)
    GET  /api/progress                    -> {phase, stage, done, total}

Errors are JSON objects {code, message, field?}. State is rebuilt from the
event log on startup, so a restart never loses accepted submissions.
"""

from __future__ import annotations

import datetime as _dt
import logging
import secrets
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from . import pipeline
from .errors import (
    AuthError,
    MissingCommentError,
    NotAssignedError,
    NotReadyError,
    ParseError,
    RelabelKitError,
    StageOrderError,
    StaleStageError,
    UndefinedMetricError,
    UnknownIdError,
    ValidationError,
)
from .models import AnnotationStage, GtStance, QualityCategory, WorkflowPhase
from .store import DatasetStore
from .workflow import Workflow, utc_now_iso

log = logging.getLogger(__name__)

DEFAULT_TOKEN_TTL_SECONDS = 12 * 3600

REPORT_FILES = {
    "label_distribution": ("distribution.json", "application/json"),
    "distribution_csv": ("distribution.csv", "text/csv"),
    "heatmap": ("heatmap.csv", "text/csv"),
    "leaderboard": ("leaderboard.csv", "text/csv"),
    "model_selection": ("model_selection_leaderboard.csv", "text/csv"),
    "regression": ("regression.json", "application/json"),
    "regression_points": ("regression_points.csv", "text/csv"),
    "agreement": ("agreement.csv", "text/csv"),
    "agreement_summary": ("agreement_summary.json", "application/json"),
    "triage": ("triage.json", "application/json"),
}


@dataclass
class SessionToken:
    annotator_id: str
    token: str
    issued_at: float


class LoginRequest(BaseModel):
    annotator_id: str
    access_key: str


class AnnotationRequest(BaseModel):
    image_id: str
    selected_labels: list[int] = Field(default_factory=list)
    comment: str | None = None


class TriageRequest(BaseModel):
    image_id: str
    quality_category: str
    gt_stance: str


class StageRequest(BaseModel):
    action: str


_STATUS_BY_ERROR = [
    (AuthError, 401),
    (NotAssignedError, 403),
    (UnknownIdError, 404),
    (NotReadyError, 409),
    (StaleStageError, 409),
    (StageOrderError, 409),
    (MissingCommentError, 422),
    (ValidationError, 422),
    (ParseError, 422),
    (UndefinedMetricError, 409),
]


def _error_response(exc: RelabelKitError) -> JSONResponse:
    status = 400
    for klass, code in _STATUS_BY_ERROR:
        if isinstance(exc, klass):
            status = code
            break
    payload = {"code": type(exc).__name__, "message": str(exc)}
    field = getattr(exc, "field", None)
    if field:
        payload["field"] = field
    return JSONResponse(status_code=status, content=payload)


def create_app(
    store_dir: Path | str,
    admin_key: str = "change-me",
    token_ttl_seconds: int = DEFAULT_TOKEN_TTL_SECONDS,
) -> FastAPI:
    store = DatasetStore(Path(store_dir))
    workflow = Workflow(store)
    tokens: dict[str, SessionToken] = {}
    tokens_lock = threading.Lock()

    app = FastAPI(title="relabelkit", docs_url=None, redoc_url=None)
    app.state.workflow = workflow

    @app.exception_handler(RelabelKitError)
    async def handle_domain_error(request: Request, exc: RelabelKitError):
        return _error_response(exc)

    def authenticate(authorization: str | None = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise AuthError("missing bearer token")
        raw = authorization.removeprefix("Bearer ").strip()
        with tokens_lock:
            session = tokens.get(raw)
            if session is None:
                raise AuthError("unknown or revoked token")
            age = _dt.datetime.now(_dt.timezone.utc).timestamp() - session.issued_at
            if age > token_ttl_seconds:
                del tokens[raw]
                raise AuthError("token expired; log in again")
        return session.annotator_id

    def require_admin(x_admin_key: str | None = Header(default=None)) -> None:
        if x_admin_key != admin_key:
            raise AuthError("invalid admin key")

    @app.post("/api/login")
    def login(body: LoginRequest):
        profile = workflow.annotator(body.annotator_id)
        if not profile.access_key or not secrets.compare_digest(
            profile.access_key, body.access_key
        ):
            raise AuthError("invalid annotator credentials")
        token = secrets.token_hex(16)
        with tokens_lock:
            tokens[token] = SessionToken(
                annotator_id=profile.annotator_id,
                token=token,
                issued_at=_dt.datetime.now(_dt.timezone.utc).timestamp(),
            )
        return {
            "token": token,
            "annotator_id": profile.annotator_id,
            "experience_tier": profile.experience_tier.value,
        }

    def _task_payload(annotator_id: str) -> dict | None:
        image_id, stage, done, total = workflow.next_task(annotator_id)
        if image_id is None:
            return None
        catalog = store.catalog()
        images = store.images()
        if stage == AnnotationStage.REFINEMENT:
            prechecked, proposal = workflow.build_refinement_presentation(image_id)
        else:
            prechecked, proposal = frozenset(), workflow.proposals()[image_id]
        groups = []
        for group in proposal.groups:
            groups.append(
                [
                    {
                        "class_id": class_id,
                        "name": catalog.by_id[class_id].name,
                        "synonyms": list(catalog.by_id[class_id].synonyms),
                        "exemplars": list(catalog.by_id[class_id].exemplar_refs),
                        "prechecked": class_id in prechecked,
                    }
                    for class_id in group
                ]
            )
        original = images[image_id].original_label
        return {
            "image_id": image_id,
            "image_uri": images[image_id].uri,
            "stage": stage.value if isinstance(stage, AnnotationStage) else stage,
            "groups": groups,
            "original_label": {
                "class_id": original,
                "name": catalog.by_id[original].name,
            },
            "progress": {"done": done, "total": total},
        }

    @app.get("/api/tasks/next")
    def next_task(annotator_id: str = Depends(authenticate)):
        return {"task": _task_payload(annotator_id)}

    @app.post("/api/annotations")
    def post_annotation(body: AnnotationRequest, annotator_id: str = Depends(authenticate)):
        stage = (
            AnnotationStage.REFINEMENT
            if workflow.phase is WorkflowPhase.REFINEMENT
            else AnnotationStage.INITIAL
        )
        revision = workflow.submit_annotation(
            annotator_id,
            body.image_id,
            stage,
            frozenset(body.selected_labels),
            comment=body.comment,
        )
        return {"image_id": body.image_id, "stage": stage.value, "revision": revision}

    @app.get("/api/labels/{class_id}/exemplars")
    def exemplars(class_id: int):
        catalog = store.catalog()
        if class_id not in catalog:
            raise UnknownIdError(f"unknown class_id {class_id}")
        entry = catalog.by_id[class_id]
        return {
            "class_id": class_id,
            "name": entry.name,
            "exemplars": list(entry.exemplar_refs),
        }

    @app.post("/api/triage")
    def post_triage(body: TriageRequest, annotator_id: str = Depends(authenticate)):
        try:
            category = QualityCategory(body.quality_category)
            stance = GtStance(body.gt_stance)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        workflow.record_triage(body.image_id, category, stance, annotator_id)
        return {"image_id": body.image_id, "stored": True}

    @app.get("/api/reports/{kind}")
    def get_report(kind: str, model: str | None = None):
        if kind not in REPORT_FILES:
            raise UnknownIdError(f"unknown report kind {kind!r}")
        filename, media_type = REPORT_FILES[kind]
        path = store.reports_dir / filename
        if not path.exists():
            raise NotReadyError(f"report {kind!r} has not been generated yet")
        text = path.read_text(encoding="utf-8")
        if kind == "heatmap" and model is not None:
            lines = text.splitlines()
            kept = [lines[0]] + [ln for ln in lines[1:] if ln.startswith(f"{model},")]
            text = "\n".join(kept) + "\n"
        return Response(content=text, media_type=media_type)

    @app.post("/api/admin/stage", dependencies=[Depends(require_admin)])
    def admin_stage(body: StageRequest):
        if body.action == "analyze-agreement":
            return pipeline.stage_analyze_agreement(store, wf=workflow)
        if body.action == "assign-refinement":
            return pipeline.stage_assign_refinement(store, wf=workflow)
        if body.action == "finalize":
            return pipeline.stage_finalize(store, wf=workflow)
        raise ValidationError(
            f"unknown action {body.action!r}; expected analyze-agreement, assign-refinement or finalize"
        )

    @app.get("/api/progress")
    def progress(annotator_id: str = Depends(authenticate)):
        _, stage, done, total = workflow.next_task(annotator_id)
        return {
            "phase": workflow.phase.value,
            "stage": stage.value if isinstance(stage, AnnotationStage) else stage,
            "done": done,
            "total": total,
            "as_of": utc_now_iso(),
        }

    return app
