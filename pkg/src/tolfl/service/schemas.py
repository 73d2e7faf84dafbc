"""Request and response bodies for the experiment service."""

from __future__ import annotations

from dataclasses import asdict
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..config import ExperimentConfig
from ..experiments import ExecResult, ReportResult, SuiteResult, TableRow


class HealthResponse(BaseModel):
    status: Literal["ok"]
    version: str


class PresetsResponse(BaseModel):
    presets: List[str]


class RowModel(BaseModel):
    method: str
    dataset: str
    scenario: str
    mean: float
    std: float
    runs: int
    config_hash: str

    @classmethod
    def from_row(cls, row: TableRow) -> "RowModel":
        return cls(**asdict(row))


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ExperimentConfig
    out_dir: Optional[str] = None


class RunResponse(BaseModel):
    config_hash: str
    row: RowModel
    aurocs: List[float]
    trace_files: List[str]
    summary_file: str
    provenance_file: str

    @classmethod
    def from_result(cls, result: ExecResult) -> "RunResponse":
        return cls(
            config_hash=result.config_hash,
            row=RowModel.from_row(result.row),
            aurocs=list(result.aurocs),
            trace_files=list(result.trace_paths),
            summary_file=result.summary_path,
            provenance_file=result.provenance_path,
        )


class SuiteRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: Literal["clean", "client-fail", "server-fail"]
    N: Optional[int] = Field(default=None, ge=1)
    k: Optional[int] = Field(default=None, ge=1)
    epochs: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    repetitions: Optional[int] = Field(default=None, ge=1)
    samples_per_class: Optional[int] = Field(default=None, ge=1)
    alpha: Optional[float] = Field(default=None, gt=0.0)
    out_dir: Optional[str] = None

    def overrides(self) -> dict:
        fields = ("N", "k", "epochs", "seed", "repetitions", "samples_per_class", "alpha")
        return {f: getattr(self, f) for f in fields if getattr(self, f) is not None}


class SuiteResponse(BaseModel):
    preset: str
    suite_hash: str
    rows: List[RowModel]
    table_file: str

    @classmethod
    def from_result(cls, result: SuiteResult) -> "SuiteResponse":
        return cls(
            preset=result.preset,
            suite_hash=result.suite_hash,
            rows=[RowModel.from_row(r) for r in result.rows],
            table_file=result.table_path,
        )


class ReportRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    trace_dir: str
    out_path: Optional[str] = None


class ReportResponse(BaseModel):
    rows: List[RowModel]
    table_file: str
    skipped: List[str]

    @classmethod
    def from_result(cls, result: ReportResult) -> "ReportResponse":
        return cls(
            rows=[RowModel.from_row(r) for r in result.rows],
            table_file=result.table_path,
            skipped=list(result.skipped),
        )
