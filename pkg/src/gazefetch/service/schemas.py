"""Pydantic request/response models for the REST surface."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel


class HealthResponse(BaseModel):
    status: str
    plan_id: str
    now_us: int


class AnnouncementModel(BaseModel):
    kind: str
    text: str
    timestamp_us: int


class MetricsModel(BaseModel):
    completion_time_s: float
    requests_total: int
    requests_incorrect: int
    error_rate: float
    partial: bool
    annotated: bool


class PartModel(BaseModel):
    label: str
    zone: str
    assembled: bool
    x_min: float
    y_min: float
    x_max: float
    y_max: float


class StateResponse(BaseModel):
    plan_id: str
    phase: str
    now_us: int
    delivered: list[str]
    assembled: list[str]
    announcements: list[AnnouncementModel]
    parts: list[PartModel]
    metrics: MetricsModel


class StepModel(BaseModel):
    step_id: str
    part_label: str
    prerequisites: list[str]
    source: str


class PlanResponse(BaseModel):
    plan_id: str
    steps: list[StepModel]


class TouchBody(BaseModel):
    label: str


class TouchResponse(BaseModel):
    announcement: Optional[AnnouncementModel]
    faults: list[str]
