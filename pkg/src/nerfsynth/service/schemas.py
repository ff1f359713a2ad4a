"""Pydantic request/response models for the service endpoints."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..bench import DEFAULT_SMOKE_ITERS

DEFAULT_MAX_REFINE = 5


class SynthRequest(BaseModel):
    paper: str = Field(description="path to the paper markdown")
    out: str = Field(description="output directory for the artifact")
    llm: str = Field(description="path to the gateway config (llm.json)")
    kb: Optional[str] = Field(default=None, description="knowledge base directory")
    grammar: Optional[str] = Field(default=None, description="grammar file; packaged default when omitted")
    citations: Optional[str] = Field(default=None, description="fixture citation graph.json for the fetcher")
    sandbox: Literal["stub", "host"] = "stub"
    smoke_iters: int = Field(default=DEFAULT_SMOKE_ITERS, gt=0)
    max_refine: int = Field(default=DEFAULT_MAX_REFINE, ge=0)
    psnr_target: Optional[float] = None


class LadderModel(BaseModel):
    imports_resolve: bool
    trainable: bool
    stable: bool
    converged: bool


class SynthResponse(BaseModel):
    exit_code: int
    message: str = ""
    repo_dir: Optional[str] = None
    events_path: Optional[str] = None
    smoke: Optional[dict] = None
    ladder: Optional[LadderModel] = None
    validation: Optional[dict] = None
    refine_iterations: int = 0
    refine_terminated_by: Optional[str] = None


class EvalRequest(BaseModel):
    bench: str = Field(description="benchmark manifest path")
    out: str = Field(description="directory for report.csv / report.json")
    judgments: Optional[str] = Field(
        default=None, description="judgments file, or directory of <id>.json fixtures"
    )
    format: Literal["csv", "json"] = "csv"
    psnr_tolerance: float = 0.5


class EvalResponse(BaseModel):
    exit_code: int
    message: str = ""
    rows: list[dict] = []
    aggregate: dict = {}
    csv_path: Optional[str] = None
    json_path: Optional[str] = None


class InspectRequest(BaseModel):
    out: str = Field(description="artifact directory written by a synth run")
    grammar: Optional[str] = None


class InspectResponse(BaseModel):
    exit_code: int
    message: str = ""
    valid: Optional[bool] = None
    violations: list[dict] = []
    files: list[dict] = []
    ladder: Optional[LadderModel] = None
    events: int = 0


class HealthResponse(BaseModel):
    status: str
    version: str
