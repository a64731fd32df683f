"""HTTP service around the simulator.

Runs execute synchronously inside the request; results are kept in an
in-memory store keyed by run id so clients can fetch them again.
"""

from __future__ import annotations

import itertools
import threading
from typing import Any, Literal, Optional, Union

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from . import __version__
from .errors import ScenarioValidationError, SimError, UnknownParameter
from .metrics import comparison_csv, series_csv, table_csv
from .runner import run_scenario, sweep
from .scenario import parse_scenario


class ScenarioRequest(BaseModel):
    scenario: dict[str, Any]


class RunRequest(BaseModel):
    scenario: dict[str, Any]
    seed: Optional[int] = None


class SweepRequest(BaseModel):
    scenario: dict[str, Any]
    axis: str
    values: list[Union[int, float]]
    jobs: int = Field(1, ge=1)


class ValidateResponse(BaseModel):
    valid: bool
    scenario: dict[str, Any]


class RunResponse(BaseModel):
    run_id: int
    report: dict[str, Any]


class RunListEntry(BaseModel):
    run_id: int
    scenario: str
    seed: int


class SweepResponse(BaseModel):
    reports: list[dict[str, Any]]
    table: list[dict[str, Any]]


class ErrorBody(BaseModel):
    error: str
    message: str
    constraint: Optional[str] = None
    errors: list[dict[str, Any]] = []


class RunStore:
    def __init__(self):
        self._runs: dict[int, dict] = {}
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def add(self, report: dict) -> int:
        with self._lock:
            run_id = next(self._ids)
            self._runs[run_id] = report
            return run_id

    def get(self, run_id: int) -> dict:
        try:
            return self._runs[run_id]
        except KeyError:
            raise HTTPException(404, f"no run {run_id}") from None

    def list(self) -> list[RunListEntry]:
        return [RunListEntry(run_id=k, scenario=r["scenario"], seed=r["seed"])
                for k, r in sorted(self._runs.items())]


def _validation_error(exc: ScenarioValidationError) -> JSONResponse:
    body = ErrorBody(error="ScenarioValidationError", message=str(exc),
                     constraint=exc.constraint, errors=exc.errors)
    return JSONResponse(body.model_dump(), status_code=422)


def create_app() -> FastAPI:
    app = FastAPI(title="floodtrace", version=__version__)
    store = RunStore()
    app.state.store = store

    @app.exception_handler(ScenarioValidationError)
    async def _on_invalid(request: Request, exc: ScenarioValidationError):
        return _validation_error(exc)

    @app.exception_handler(UnknownParameter)
    async def _on_unknown(request: Request, exc: UnknownParameter):
        body = ErrorBody(error="UnknownParameter", message=str(exc), constraint="unknown-parameter")
        return JSONResponse(body.model_dump(), status_code=422)

    @app.exception_handler(SimError)
    async def _on_sim_error(request: Request, exc: SimError):
        body = ErrorBody(error=type(exc).__name__, message=str(exc))
        return JSONResponse(body.model_dump(), status_code=500)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/scenarios/validate", response_model=ValidateResponse)
    def validate(req: ScenarioRequest) -> ValidateResponse:
        sc = parse_scenario(req.scenario)
        return ValidateResponse(valid=True, scenario=sc.normalized())

    @app.post("/runs", response_model=RunResponse)
    def create_run(req: RunRequest) -> RunResponse:
        report = run_scenario(parse_scenario(req.scenario), req.seed)
        return RunResponse(run_id=store.add(report), report=report)

    @app.get("/runs", response_model=list[RunListEntry])
    def list_runs() -> list[RunListEntry]:
        return store.list()

    @app.get("/runs/{run_id}", response_model=RunResponse)
    def get_run(run_id: int) -> RunResponse:
        return RunResponse(run_id=run_id, report=store.get(run_id))

    @app.get("/runs/{run_id}/csv/{table}", response_class=PlainTextResponse)
    def get_run_csv(run_id: int, table: Literal["series", "comparison"]) -> str:
        report = store.get(run_id)
        return series_csv(report) if table == "series" else comparison_csv(report)

    @app.post("/sweeps", response_model=SweepResponse)
    def create_sweep(req: SweepRequest) -> SweepResponse:
        reports, table = sweep(parse_scenario(req.scenario), req.axis, req.values, req.jobs)
        return SweepResponse(reports=reports, table=table)

    @app.post("/sweeps/csv", response_class=PlainTextResponse)
    def create_sweep_csv(req: SweepRequest) -> str:
        _, table = sweep(parse_scenario(req.scenario), req.axis, req.values, req.jobs)
        return table_csv(table)

    return app


app = create_app()
