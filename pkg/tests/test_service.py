import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from bermudan_bounds.scenario import (dumps_report, scenario_from_dict,
                                      scenario_from_json)
from bermudan_bounds.errors import InvalidSpecError
from bermudan_bounds.service import app

from conftest import load_scenario_doc

client = TestClient(app)


class TestScenarioParsing:
    def test_round_trip(self):
        doc = load_scenario_doc("gauss_c1")
        sc = scenario_from_dict(doc)
        assert sc.mode == "bermudan_12"
        assert sc.config.grid_n == 64
        assert sc.seed == 101

    def test_bad_json(self):
        with pytest.raises(InvalidSpecError):
            scenario_from_json("{not json")

    def test_missing_fields(self):
        with pytest.raises(InvalidSpecError):
            scenario_from_dict({"schema": 1})
        with pytest.raises(InvalidSpecError):
            scenario_from_dict({"schema": 2, "nu": {"family": "uniform",
                                                    "half_width": 1.0}})

    def test_nonconvex_payoff_rejected(self):
        doc = load_scenario_doc("gauss_c1")
        doc["payoffs"]["a"] = {"family": "pwl",
                               "breakpoints": [-1.0, 0.0, 1.0],
                               "values": [0.0, 1.0, 0.0]}
        with pytest.raises(InvalidSpecError):
            scenario_from_dict(doc)

    def test_asymmetric_payoff_rejected_in_bermudan_mode(self):
        doc = load_scenario_doc("gauss_c1")
        doc["payoffs"]["a"] = {"family": "max_of_lines",
                               "lines": [[1.0, 0.0], [-0.5, 0.3]]}
        with pytest.raises(InvalidSpecError):
            scenario_from_dict(doc)

    def test_time0_defaults_mu_to_point_mass(self):
        sc = scenario_from_dict(load_scenario_doc("time0_uniform"))
        mu = sc.require_mu()
        assert mu.kind == "atoms"
        assert mu.mean == pytest.approx(sc.nu.mean)


class TestEndpoints:
    def test_health(self):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"

    def test_check_endpoint(self):
        resp = client.post("/v1/check",
                           json={"scenario": load_scenario_doc("tri_c1")})
        assert resp.status_code == 200
        rep = resp.json()["report"]
        assert rep["convex_order"]["ordered"]
        assert rep["dispersion"]["e"] == pytest.approx(0.75, abs=1e-9)

    def test_check_convex_order_violation(self):
        resp = client.post("/v1/check",
                           json={"scenario": load_scenario_doc("bad_order")})
        assert resp.status_code == 409
        assert resp.json()["error_kind"] == "assumption-violated"

    def test_invalid_scenario_rejected(self):
        doc = load_scenario_doc("tri_c1")
        doc["solver"]["tol"] = -1.0
        resp = client.post("/v1/check", json={"scenario": doc})
        assert resp.status_code == 422

    def test_solve_endpoint_time0(self):
        resp = client.post("/v1/solve",
                           json={"scenario": load_scenario_doc("time0_uniform")})
        assert resp.status_code == 200
        rep = resp.json()["report"]
        assert rep["value"] == pytest.approx(5.0 / 12.0, abs=1e-6)
        assert rep["f"] == pytest.approx(-0.5, abs=1e-6)
        assert rep["g"] == pytest.approx(0.5, abs=1e-6)

    def test_solve_endpoint_bermudan(self):
        resp = client.post("/v1/solve",
                           json={"scenario": load_scenario_doc("tri_c2")})
        assert resp.status_code == 200
        rep = resp.json()["report"]
        assert rep["solution"]["case"] == "C2"
        assert abs(rep["duality_gap"]) < 2e-4
        lo = rep["monte_carlo"]["ci99_low"]
        hi = rep["monte_carlo"]["ci99_high"]
        assert lo <= rep["primal_value"] <= hi

    def test_overrides_propagate(self):
        doc = load_scenario_doc("time0_uniform")
        resp = client.post("/v1/solve", json={
            "scenario": doc, "overrides": {"seed": 999}})
        assert resp.status_code == 200

    def test_report_endpoint_files(self):
        resp = client.post("/v1/report",
                           json={"scenario": load_scenario_doc("tri_c1")})
        assert resp.status_code == 200
        body = resp.json()
        assert set(body["files"]) >= {"hedge_curves.csv", "curtain_right.csv",
                                      "curtain_left.csv", "regions.csv"}
        header = body["files"]["hedge_curves.csv"].splitlines()[0]
        assert header == "x,psi_star,phi_star"
        assert body["report"]["coupling_check"]["cdf_sup_error"] < 5e-4

    def test_reduce_endpoint(self):
        # hand-written valid superhedge with a non-convex psi leg
        from bermudan_bounds.hedging import (Superhedge, dump_superhedge,
                                             generate_superhedge)
        from bermudan_bounds.grids import GridFunction
        from bermudan_bounds import quadratic
        doc = load_scenario_doc("gauss_c1")
        g = np.linspace(-8.5, 8.5, 401)
        b = quadratic(0.0, 1.0)
        a = quadratic(3.1, 1.0)
        base = generate_superhedge(GridFunction(g, b(g) + 0.8), a, b)
        bump = 0.4 * np.exp(-2.0 * (g - 1.0) ** 2)
        hedge = Superhedge(phi=base.phi,
                           psi=GridFunction(g, base.psi.values + bump),
                           theta1=base.theta1, theta2=base.theta2)
        resp = client.post("/v1/reduce", json={
            "scenario": doc, "superhedge": dump_superhedge(hedge)})
        assert resp.status_code == 200
        body = resp.json()
        costs = [step["cost"] for step in body["report"]["cost_trail"]]
        assert all(c1 <= c0 + 1e-8 for c0, c1 in zip(costs, costs[1:]))
        assert body["report"]["non_increasing"]
        # returned portfolio parses back
        from bermudan_bounds.hedging import load_superhedge
        load_superhedge(body["superhedge"])

    def test_reduce_rejects_non_superhedge(self):
        from bermudan_bounds.hedging import Superhedge, dump_superhedge
        from bermudan_bounds.grids import GridFunction
        doc = load_scenario_doc("gauss_c1")
        g = np.linspace(-8.5, 8.5, 101)
        zero = GridFunction(g, np.zeros_like(g))
        resp = client.post("/v1/reduce", json={
            "scenario": doc,
            "superhedge": dump_superhedge(
                Superhedge(phi=zero, psi=zero, theta1=zero, theta2=zero))})
        assert resp.status_code == 409


class TestDeterminism:
    def test_identical_scenario_and_seed_byte_identical(self):
        doc = load_scenario_doc("tri_c3t")
        r1 = client.post("/v1/solve", json={"scenario": doc}).json()["report"]
        r2 = client.post("/v1/solve", json={"scenario": doc}).json()["report"]
        assert dumps_report(r1) == dumps_report(r2)

    def test_csv_round_trip_bit_exact(self):
        body = client.post("/v1/report",
                           json={"scenario": load_scenario_doc("tri_c1")}).json()
        for name, text in body["files"].items():
            lines = text.strip().splitlines()
            header, rows = lines[0], lines[1:]
            if name == "regions.csv":
                continue  # mixed string columns
            parsed = [[float(tok) for tok in row.split(",")] for row in rows]
            rebuilt = "\n".join([header] + [",".join(repr(v) for v in row)
                                            for row in parsed]) + "\n"
            assert rebuilt == text
