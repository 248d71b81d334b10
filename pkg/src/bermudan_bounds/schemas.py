"""Pydantic request/response models for the pricing service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field


class MeasureSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: str
    sigma: Optional[float] = None
    half_width: Optional[float] = None
    xs: Optional[list[float]] = None
    densities: Optional[list[float]] = None
    locs: Optional[list[float]] = None
    weights: Optional[list[float]] = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class PayoffSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: str
    c0: Optional[float] = None
    c2: Optional[float] = None
    breakpoints: Optional[list[float]] = None
    values: Optional[list[float]] = None
    lines: Optional[list[list[float]]] = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class PayoffPairSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: PayoffSpec
    b: PayoffSpec


class SolverSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid_n: int = 64
    trunc_quantile: float = 1e-9
    tol: float = 1e-8


class OracleSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    n_mu: int = 200
    n_nu: int = 400


class ScenarioModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: int = Field(alias="schema", default=1)
    mode: str = "bermudan_12"
    mu: Optional[MeasureSpec] = None
    nu: MeasureSpec
    payoffs: PayoffPairSpec
    solver: SolverSettings = SolverSettings()
    oracle: OracleSettings = OracleSettings()
    seed: int = 0
    superhedge_path: Optional[str] = None

    def as_document(self) -> dict:
        doc: dict[str, Any] = {
            "schema": self.schema_version,
            "mode": self.mode,
            "nu": self.nu.as_dict(),
            "payoffs": {"a": self.payoffs.a.as_dict(),
                        "b": self.payoffs.b.as_dict()},
            "solver": self.solver.model_dump(),
            "oracle": self.oracle.model_dump(),
            "seed": self.seed,
        }
        if self.mu is not None:
            doc["mu"] = self.mu.as_dict()
        if self.superhedge_path is not None:
            doc["superhedge_path"] = self.superhedge_path
        return doc


class Overrides(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid_n: Optional[int] = None
    tol: Optional[float] = None
    seed: Optional[int] = None


class ScenarioRequest(BaseModel):
    scenario: ScenarioModel
    overrides: Optional[Overrides] = None


class ReduceRequest(ScenarioRequest):
    superhedge: str  # columnar text of the portfolio to reduce


class ErrorBody(BaseModel):
    error_kind: str
    detail: str


class CheckResponse(BaseModel):
    report: dict


class SolveResponse(BaseModel):
    report: dict


class OracleResponse(BaseModel):
    report: dict


class ReduceResponse(BaseModel):
    report: dict
    superhedge: str


class ReportResponse(BaseModel):
    report: dict
    files: dict[str, str]


class HealthResponse(BaseModel):
    status: str
    version: str
