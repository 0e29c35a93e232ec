"""Pydantic request/response models for the worklist HTTP API."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

Status = Literal[
    "PENDING",
    "CONFIRMED_ABNORMAL",
    "OVERRIDDEN_NORMAL",
    "CONFIRMED_NORMAL",
    "OVERRIDDEN_ABNORMAL",
]
Verdict = Literal["ABNORMAL", "NORMAL"]
SortMode = Literal["prob_desc", "prob_asc", "study_id_asc"]


class WorklistItem(BaseModel):
    study_id: str
    body_part: str
    probability: float | None = None
    image_count: int
    status: Status
    scored_at: str | None = None
    model_prediction: Verdict | None = None
    version: int


class WorklistPage(BaseModel):
    items: list[WorklistItem]
    total: int
    page: int
    page_size: int


class ImageScore(BaseModel):
    index: int
    path: str
    probability: float | None = None
    error: str | None = None
    image_url: str
    overlay_url: str


class StudyDetail(BaseModel):
    study_id: str
    body_part: str
    probability: float | None = None
    status: Status
    scored_at: str | None = None
    model_prediction: Verdict | None = None
    version: int
    images: list[ImageScore]
    decision: DecisionRecord | None = None


class DecisionRecord(BaseModel):
    verdict: Verdict
    note: str = ""
    reviewer: str = ""
    decided_at: str


class DecisionRequest(BaseModel):
    verdict: Verdict
    note: str = Field(default="", max_length=4000)


class StatsResponse(BaseModel):
    total: int
    by_status: dict[str, int]
    by_body_part: dict[str, int]
    decided: int
    agreement_rate: float | None = None


class HealthResponse(BaseModel):
    status: Literal["ok"]
    model_key: str
    studies: int


StudyDetail.model_rebuild()
