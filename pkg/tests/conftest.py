"""Shared fixtures: the instance suite is solved once per session."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import pytest

from bermudan_bounds import gaussian, quadratic, max_of_lines, triangle, uniform
from bermudan_bounds.payoffs import Payoff
from bermudan_bounds.measures import Measure
from bermudan_bounds.primal_models import StopModel, build_model
from bermudan_bounds.solver import BermudanSolution, solve_bermudan

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@dataclass
class SuiteCase:
    name: str
    expected_case: str
    mu: Measure
    nu: Measure
    a: Payoff
    b: Payoff

    def scenario_path(self) -> Path:
        return SCENARIO_DIR / f"{self.name}.json"


def _suite_defs():
    g1 = gaussian(1.0)
    g2 = gaussian(math.sqrt(2.0))
    tri = triangle(1.0)
    uni = uniform(2.0)
    b = quadratic(0.0, 1.0)
    return [
        SuiteCase("gauss_c1", "C1", g1, g2, quadratic(3.1, 1.0), b),
        SuiteCase("gauss_c2", "C2", g1, g2, quadratic(4.5, 1.0), b),
        SuiteCase("gauss_c3", "C3", g1, g2, quadratic(1.0, 1.0), b),
        SuiteCase("gauss_c3t", "C3_tilde", g1, g2,
                  max_of_lines([[0.0, 1.0]]), b),
        SuiteCase("tri_c1", "C1", tri, uni, quadratic(0.9, 1.0), b),
        SuiteCase("tri_c2", "C2", tri, uni, quadratic(2.0, 1.0), b),
        SuiteCase("tri_c3", "C3", tri, uni, max_of_lines([[0.0, 0.8]]), b),
        SuiteCase("tri_c3t", "C3_tilde", tri, uni,
                  max_of_lines([[0.0, 0.4]]), b),
    ]


@pytest.fixture(scope="session")
def suite():
    return _suite_defs()


@pytest.fixture(scope="session")
def solved_suite(suite) -> dict[str, BermudanSolution]:
    out = {}
    for case in suite:
        out[case.name] = solve_bermudan(case.mu, case.nu, case.a, case.b)
    return out


@pytest.fixture(scope="session")
def suite_models(solved_suite) -> dict[str, StopModel]:
    return {name: build_model(sol) for name, sol in solved_suite.items()}


@pytest.fixture(scope="session")
def gauss_pair():
    return gaussian(1.0), gaussian(math.sqrt(2.0))


@pytest.fixture(scope="session")
def tri_uni_pair():
    return triangle(1.0), uniform(2.0)


def load_scenario_doc(name: str) -> dict:
    return json.loads((SCENARIO_DIR / f"{name}.json").read_text())
