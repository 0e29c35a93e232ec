"""FastAPI application exposing the triage worklist.

Endpoints: worklist paging/filtering, study detail, base image and
activation-overlay PNGs, reviewer decisions with re-open, and summary
stats.  The reviewer's name is taken verbatim from the X-Reviewer header.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Query, Request, Response
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from ..dataset import PreprocessConfig
from ..errors import ImageDecodeError
from . import schemas
from .overlays import OverlayCache
from .store import ConflictError, UnknownStudyError, WorklistStore

API_VERSION = "1.0.0"


@dataclass
class ServiceConfig:
    db_path: Path
    cache_dir: Path
    scorer: object  # needs score_batch(); overlay use also needs forward()/head_weights()
    model_key: str = "model"
    threshold: float = 0.5
    alpha: float = 0.4
    colormap: str = "blue_red"
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    frontend_dir: Path | None = None


def _item(row: dict) -> schemas.WorklistItem:
    return schemas.WorklistItem(
        study_id=row["study_id"],
        body_part=row["body_part"],
        probability=row["probability"],
        image_count=row["image_count"],
        status=row["status"],
        scored_at=row["scored_at"],
        model_prediction=row["model_prediction"],
        version=row["version"],
    )


def create_app(config: ServiceConfig) -> FastAPI:
    store = WorklistStore(config.db_path)
    app = FastAPI(
        title="radtriage worklist service",
        version=API_VERSION,
        description=(
            "Triage worklist for radiograph studies scored by an abnormality "
            "classifier: review the queue ordered by predicted probability, "
            "inspect per-view activation overlays, and record verdicts."
        ),
    )
    app.state.store = store
    app.state.config = config
    overlay_cache: OverlayCache | None = None

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        # Malformed query parameters or request bodies are client errors,
        # reported as 400 rather than the framework default 422.
        return JSONResponse(
            status_code=400,
            content={"detail": jsonable_encoder(exc.errors())},
        )

    def overlays() -> OverlayCache:
        nonlocal overlay_cache
        if overlay_cache is None:
            overlay_cache = OverlayCache(
                model=config.scorer,
                cache_dir=config.cache_dir,
                model_key=config.model_key,
                config=config.preprocess,
                alpha=config.alpha,
                colormap=config.colormap,
            )
        return overlay_cache

    def study_or_404(study_id: str) -> dict:
        try:
            return store.get(study_id)
        except UnknownStudyError:
            raise HTTPException(status_code=404, detail=f"unknown study {study_id!r}")

    def image_or_404(study_id: str, index: int) -> dict:
        rows = store.image_scores(study_or_404(study_id)["study_id"])
        if index < 0 or index >= len(rows):
            raise HTTPException(
                status_code=404,
                detail=f"study {study_id!r} has no image index {index}",
            )
        return rows[index]

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(
            status="ok", model_key=config.model_key, studies=store.study_count()
        )

    @app.get("/worklist", response_model=schemas.WorklistPage)
    def worklist(
        status: schemas.Status | None = Query(default=None),
        body_part: str | None = Query(default=None),
        sort: schemas.SortMode = Query(default="prob_desc"),
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=50, ge=1, le=500),
    ):
        rows, total = store.query(
            status=status, body_part=body_part, sort=sort, page=page, page_size=page_size
        )
        return schemas.WorklistPage(
            items=[_item(r) for r in rows], total=total, page=page, page_size=page_size
        )

    @app.get("/studies/{study_id:path}/images/{index}/overlay")
    def study_image_overlay(study_id: str, index: int):
        row = image_or_404(study_id, index)
        try:
            data = overlays().get_png(row["image_path"])
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail="image file is missing")
        except ImageDecodeError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return Response(content=data, media_type="image/png")

    @app.get("/studies/{study_id:path}/images/{index}")
    def study_image(study_id: str, index: int):
        row = image_or_404(study_id, index)
        path = Path(row["image_path"])
        if not path.is_file():
            raise HTTPException(status_code=404, detail="image file is missing")
        return FileResponse(path, media_type="image/png")

    @app.get("/studies/{study_id:path}/audit")
    def study_audit(study_id: str):
        study_or_404(study_id)
        return [e for e in store.audit_log() if e["study_id"] == study_id]

    @app.post("/studies/{study_id:path}/decision", response_model=schemas.WorklistItem)
    def post_decision(
        study_id: str,
        decision: schemas.DecisionRequest,
        x_reviewer: str = Header(default=""),
    ):
        study_or_404(study_id)
        try:
            row = store.decide(
                study_id, decision.verdict, note=decision.note, reviewer=x_reviewer
            )
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return _item(row)

    @app.post("/studies/{study_id:path}/reopen", response_model=schemas.WorklistItem)
    def post_reopen(study_id: str):
        study_or_404(study_id)
        try:
            row = store.reopen(study_id)
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return _item(row)

    @app.get("/studies/{study_id:path}", response_model=schemas.StudyDetail)
    def study_detail(study_id: str):
        row = study_or_404(study_id)
        images = [
            schemas.ImageScore(
                index=r["idx"],
                path=r["image_path"],
                probability=r["probability"],
                error=r["error"],
                image_url=f"/studies/{study_id}/images/{r['idx']}",
                overlay_url=f"/studies/{study_id}/images/{r['idx']}/overlay",
            )
            for r in store.image_scores(study_id)
        ]
        decision = store.active_decision(study_id)
        return schemas.StudyDetail(
            study_id=row["study_id"],
            body_part=row["body_part"],
            probability=row["probability"],
            status=row["status"],
            scored_at=row["scored_at"],
            model_prediction=row["model_prediction"],
            version=row["version"],
            images=images,
            decision=schemas.DecisionRecord(**decision) if decision else None,
        )

    @app.get("/stats", response_model=schemas.StatsResponse)
    def stats():
        return schemas.StatsResponse(**store.stats())

    if config.frontend_dir and Path(config.frontend_dir).is_dir():
        app.mount(
            "/ui",
            StaticFiles(directory=str(config.frontend_dir), html=True),
            name="ui",
        )

    return app
