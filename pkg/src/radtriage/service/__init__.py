"""Worklist triage service: persistent store, scoring ingest, HTTP app."""

from radtriage.service.app import API_VERSION, ServiceConfig, create_app
from radtriage.service.overlays import OverlayCache, checkpoint_digest
from radtriage.service.schemas import (
    DecisionRecord,
    DecisionRequest,
    HealthResponse,
    ImageScore,
    SortMode,
    StatsResponse,
    Status,
    StudyDetail,
    Verdict,
    WorklistItem,
    WorklistPage,
)
from radtriage.service.scoring import score_manifest
from radtriage.service.store import ConflictError, UnknownStudyError, WorklistStore

__all__ = [
    "API_VERSION",
    "ConflictError",
    "DecisionRecord",
    "DecisionRequest",
    "HealthResponse",
    "ImageScore",
    "OverlayCache",
    "ServiceConfig",
    "SortMode",
    "StatsResponse",
    "Status",
    "StudyDetail",
    "UnknownStudyError",
    "Verdict",
    "WorklistItem",
    "WorklistPage",
    "WorklistStore",
    "checkpoint_digest",
    "create_app",
    "score_manifest",
]
