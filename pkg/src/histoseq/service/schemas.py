"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, Field


class FlopsRequest(BaseModel):
    input_size: int = Field(ge=1)
    hidden_units: int = Field(ge=1)
    class_count: int = Field(ge=1)


class FlopsResponse(BaseModel):
    report: dict
    text: str


class ScanRequest(BaseModel):
    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    strategy: str = "scan2"


class ScanResponse(BaseModel):
    rows: int
    cols: int
    strategy: str
    visits: List[List[int]]
    continuity_cost: float


class WorkspaceRequest(BaseModel):
    workspace: str
    config_path: Optional[str] = None


class ExtractRegionsRequest(WorkspaceRequest):
    xml: str
    image: str


class RunAllRequest(ExtractRegionsRequest):
    pass


class ErrorBody(BaseModel):
    category: str
    message: str
    exit_code: int


class ErrorResponse(BaseModel):
    error: ErrorBody
