"""FastAPI app. Request validation is pydantic's; execution errors map to 400."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..experiments import (
    SUITE_PRESETS,
    ExperimentError,
    execute,
    report,
    resolve_out_dir,
    run_suite,
)
from .schemas import (
    HealthResponse,
    PresetsResponse,
    ReportRequest,
    ReportResponse,
    RunRequest,
    RunResponse,
    SuiteRequest,
    SuiteResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="tolfl experiment service", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/presets", response_model=PresetsResponse)
    def presets() -> PresetsResponse:
        return PresetsResponse(presets=list(SUITE_PRESETS))

    @app.post("/runs", response_model=RunResponse)
    def runs(req: RunRequest) -> RunResponse:
        out_dir = resolve_out_dir(req.out_dir)
        try:
            result = execute(req.config, out_dir)
        except (ExperimentError, ValueError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return RunResponse.from_result(result)

    @app.post("/suites", response_model=SuiteResponse)
    def suites(req: SuiteRequest) -> SuiteResponse:
        out_dir = resolve_out_dir(req.out_dir)
        try:
            result = run_suite(req.preset, out_dir, **req.overrides())
        except (ExperimentError, ValueError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return SuiteResponse.from_result(result)

    @app.post("/reports", response_model=ReportResponse)
    def reports(req: ReportRequest) -> ReportResponse:
        try:
            result = report(req.trace_dir, out_path=req.out_path)
        except (ValueError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return ReportResponse.from_result(result)

    return app


app = create_app()
