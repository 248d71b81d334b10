"""Scenario documents: the single structured input consumed by every command.

A scenario is a versioned JSON object naming the two marginals, the payoff
pair, solver and oracle settings, a seed, and the problem mode.  Payoff
expressiveness is deliberately restricted to three convex families so that
convexity stays checkable at validation time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InvalidSpecError
from .measures import Measure, atoms, make_measure
from .payoffs import Payoff, make_payoff
from .solver import SolverConfig

SCHEMA_VERSION = 1
MODES = ("bermudan_12", "time0")
COMMANDS = ("check", "solve", "oracle", "reduce", "report")


@dataclass
class Scenario:
    doc: dict
    mode: str
    mu: Measure | None
    nu: Measure
    a: Payoff
    b: Payoff
    config: SolverConfig
    oracle_enabled: bool
    oracle_n_mu: int
    oracle_n_nu: int
    seed: int
    superhedge_path: str | None = None

    def require_mu(self) -> Measure:
        if self.mu is None:
            raise InvalidSpecError("scenario has no initial-law descriptor")
        return self.mu


def _expect(doc: dict, key: str, types, what: str):
    if key not in doc:
        raise InvalidSpecError(f"scenario missing {what} ({key!r})")
    val = doc[key]
    if not isinstance(val, types):
        raise InvalidSpecError(f"scenario field {key!r} has the wrong type")
    return val


def _positive(val, name: str) -> float:
    val = float(val)
    if not val > 0:
        raise InvalidSpecError(f"{name} must be positive")
    return val


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise InvalidSpecError("scenario must be a JSON object")
    version = _expect(doc, "schema", int, "schema version")
    if version != SCHEMA_VERSION:
        raise InvalidSpecError(f"unsupported schema version {version}")
    mode = doc.get("mode", "bermudan_12")
    if mode not in MODES:
        raise InvalidSpecError(f"unknown mode {mode!r}; expected one of {MODES}")

    solver_doc = doc.get("solver", {})
    if not isinstance(solver_doc, dict):
        raise InvalidSpecError("scenario field 'solver' must be an object")
    config = SolverConfig(
        grid_n=int(solver_doc.get("grid_n", 64)),
        tol=_positive(solver_doc.get("tol", 1e-8), "solver.tol"),
        trunc_quantile=_positive(solver_doc.get("trunc_quantile", 1e-9),
                                 "solver.trunc_quantile"),
    )
    if config.grid_n < 8:
        raise InvalidSpecError("solver.grid_n must be at least 8")

    nu = make_measure(_expect(doc, "nu", dict, "terminal-law descriptor"),
                      trunc_quantile=config.trunc_quantile)
    mu = None
    if "mu" in doc and doc["mu"] is not None:
        mu = make_measure(_expect(doc, "mu", dict, "initial-law descriptor"),
                          trunc_quantile=config.trunc_quantile)
    elif mode == "time0":
        mu = atoms([nu.mean], [1.0])
    else:
        raise InvalidSpecError("mode 'bermudan_12' needs an initial law 'mu'")

    payoffs = _expect(doc, "payoffs", dict, "payoff pair")
    a = make_payoff(_expect(payoffs, "a", dict, "maturity-1 payoff"))
    b = make_payoff(_expect(payoffs, "b", dict, "maturity-2 payoff"))
    span = max(abs(nu.lo), abs(nu.hi)) * 1.05
    if not b.is_convex(-span, span):
        raise InvalidSpecError("payoff b must be convex")
    if not a.is_convex(-span, span):
        raise InvalidSpecError("payoff a must be convex")
    if mode == "bermudan_12":
        if not (a.is_symmetric(0, span) and b.is_symmetric(0, span)):
            raise InvalidSpecError(
                "mode 'bermudan_12' needs payoffs symmetric about zero")

    oracle_doc = doc.get("oracle", {})
    if not isinstance(oracle_doc, dict):
        raise InvalidSpecError("scenario field 'oracle' must be an object")
    n_mu = int(oracle_doc.get("n_mu", 200))
    n_nu = int(oracle_doc.get("n_nu", 400))
    if n_mu < 2 or n_nu < 2:
        raise InvalidSpecError("oracle lattice sizes must be at least 2")

    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise InvalidSpecError("seed must be an integer")

    sh_path = doc.get("superhedge_path")
    if sh_path is not None and not isinstance(sh_path, str):
        raise InvalidSpecError("superhedge_path must be a string")

    return Scenario(doc=doc, mode=mode, mu=mu, nu=nu, a=a, b=b, config=config,
                    oracle_enabled=bool(oracle_doc.get("enabled", True)),
                    oracle_n_mu=n_mu, oracle_n_nu=n_nu, seed=seed,
                    superhedge_path=sh_path)


def scenario_from_json(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"scenario is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def dumps_report(report: dict) -> str:
    """Canonical JSON serialization: identical input -> identical bytes."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
