"""FastAPI service wrapping the bound solver.

Run it with uvicorn:

    uvicorn bermudan_bounds.service:app --port 8000

Every endpoint takes a scenario document in the request body and returns the
command's JSON report; the `report` and `reduce` endpoints additionally carry
file payloads (CSV text) that the CLI writes to disk.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .engine import run_check, run_oracle, run_reduce, run_report, run_solve
from .errors import (AssumptionViolatedError, BermudanBoundsError,
                     InvalidSpecError, NumericalFailureError)
from .scenario import Scenario, scenario_from_dict
from .schemas import (CheckResponse, HealthResponse, OracleResponse,
                      ReduceRequest, ReduceResponse, ReportResponse,
                      ScenarioRequest, SolveResponse)

app = FastAPI(title="bermudan-bounds",
              description="Model-independent price bounds for two-exercise "
                          "Bermudan options with convex payoffs",
              version=__version__)


def _scenario(req: ScenarioRequest) -> Scenario:
    doc = req.scenario.as_document()
    if req.overrides is not None:
        if req.overrides.grid_n is not None:
            doc.setdefault("solver", {})["grid_n"] = req.overrides.grid_n
        if req.overrides.tol is not None:
            doc.setdefault("solver", {})["tol"] = req.overrides.tol
        if req.overrides.seed is not None:
            doc["seed"] = req.overrides.seed
    return scenario_from_dict(doc)


@app.exception_handler(InvalidSpecError)
async def _invalid_spec(request: Request, exc: InvalidSpecError):
    return JSONResponse(status_code=422,
                        content={"error_kind": "invalid-scenario",
                                 "detail": str(exc)})


@app.exception_handler(AssumptionViolatedError)
async def _assumption(request: Request, exc: AssumptionViolatedError):
    return JSONResponse(status_code=409,
                        content={"error_kind": "assumption-violated",
                                 "detail": str(exc)})


@app.exception_handler(NumericalFailureError)
async def _numerical(request: Request, exc: NumericalFailureError):
    return JSONResponse(status_code=500,
                        content={"error_kind": "numerical-failure",
                                 "detail": str(exc)})


@app.exception_handler(BermudanBoundsError)
async def _other(request: Request, exc: BermudanBoundsError):
    return JSONResponse(status_code=500,
                        content={"error_kind": "numerical-failure",
                                 "detail": str(exc)})


@app.get("/health", response_model=HealthResponse)
def health():
    return {"status": "ok", "version": __version__}


@app.post("/v1/check", response_model=CheckResponse)
def check(req: ScenarioRequest):
    return {"report": run_check(_scenario(req))}


@app.post("/v1/solve", response_model=SolveResponse)
def solve(req: ScenarioRequest):
    return {"report": run_solve(_scenario(req))}


@app.post("/v1/oracle", response_model=OracleResponse)
def oracle(req: ScenarioRequest):
    return {"report": run_oracle(_scenario(req))}


@app.post("/v1/reduce", response_model=ReduceResponse)
def reduce(req: ReduceRequest):
    report, hedge = run_reduce(_scenario(req), req.superhedge)
    return {"report": report, "superhedge": hedge}


@app.post("/v1/report", response_model=ReportResponse)
def report(req: ScenarioRequest):
    rep, files = run_report(_scenario(req))
    return {"report": rep, "files": files}
