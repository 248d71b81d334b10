"""Command implementations shared by the service endpoints.

Every command takes a parsed scenario and returns plain JSON-ready dicts
(plus named CSV payloads where a command emits plot data).  File handling
lives in the CLI; network handling lives in the service.
"""

from __future__ import annotations

import numpy as np

from . import hedging, lp_oracle
from .errors import AssumptionViolatedError
from .measures import check_convex_order, check_dispersion
from .payoffs import normalize_payoffs
from .primal_models import (build_model, check_coupling, primal_value,
                            sample_paths)
from .quadrature import integrate_against
from .scenario import Scenario
from .solver import BermudanSolution, solve_bermudan, solve_time0


def _round_trip_float(x) -> float:
    return float(x)


def _payoff_block(scenario: Scenario) -> dict:
    return {"a": scenario.a.family, "b": scenario.b.family}


def run_check(scenario: Scenario) -> dict:
    """Convex order and dispersion diagnostics (no solving)."""
    nu = scenario.nu
    report: dict = {"command": "check", "mode": scenario.mode,
                    "payoffs": _payoff_block(scenario)}
    mu = scenario.require_mu()
    order = check_convex_order(mu, nu, scenario.config.tol)
    report["convex_order"] = {
        "ordered": order.ordered,
        "worst_k": _round_trip_float(order.worst_k),
        "worst_gap": _round_trip_float(order.worst_gap),
        "mean_gap": _round_trip_float(order.mean_gap),
    }
    if not order.ordered:
        raise AssumptionViolatedError(
            f"marginals not in convex order (worst gap {order.worst_gap:.3e} "
            f"at k={order.worst_k:.6g})")
    if scenario.mode == "bermudan_12":
        e = check_dispersion(mu, nu)
        report["dispersion"] = {"e": _round_trip_float(e)}
        pair = normalize_payoffs(scenario.a, scenario.b,
                                 -1.05 * nu.hi, 1.05 * nu.hi)
        report["payoff_normalization"] = {"a_replaced_by_max": pair.normalized}
    report["ok"] = True
    return report


def _solve(scenario: Scenario) -> BermudanSolution:
    return solve_bermudan(scenario.require_mu(), scenario.nu, scenario.a,
                          scenario.b, scenario.config)


def _solution_block(solution: BermudanSolution) -> dict:
    case = solution.case
    return {
        "case": case.case_label,
        "thresholds": {k: _round_trip_float(v) for k, v in case.thresholds.items()},
        "lines": {k: {"slope": _round_trip_float(s), "intercept": _round_trip_float(c)}
                  for k, (s, c) in case.lines.items()},
        "dual_value": _round_trip_float(case.dual_value),
        "degenerate_root": case.degenerate_root,
        "diagnostics": {k: _round_trip_float(v) for k, v in case.diagnostics.items()
                        if isinstance(v, (int, float))},
        "normalized_payoff": solution.instance.pair.normalized,
    }


def run_solve(scenario: Scenario, mc_paths: int = 100_000) -> dict:
    """Analytic solve: case, thresholds, both bound values, duality gap."""
    if scenario.mode == "time0":
        sol = solve_time0(scenario.nu, scenario.a, scenario.b)
        return {
            "command": "solve", "mode": "time0",
            "f": _round_trip_float(sol.f), "g": _round_trip_float(sol.g),
            "chord_slope": _round_trip_float(sol.slope),
            "value": _round_trip_float(sol.value),
            "canonical_bound": _round_trip_float(sol.canonical_bound),
            "improvement": _round_trip_float(sol.improvement),
            "short_circuit": sol.short_circuit,
            "payoffs": _payoff_block(scenario),
        }
    solution = _solve(scenario)
    model = build_model(solution)
    inst = solution.instance
    prim = primal_value(model, inst.a, inst.b)
    report = {
        "command": "solve", "mode": scenario.mode,
        "payoffs": _payoff_block(scenario),
        "solution": _solution_block(solution),
        "primal_value": _round_trip_float(prim),
        "duality_gap": _round_trip_float(prim - solution.case.dual_value),
        "randomization_required": model.randomization_required,
        "regions": model.region_table(),
    }
    if mc_paths > 0:
        est = sample_paths(model, mc_paths, scenario.seed, inst.a, inst.b)
        report["monte_carlo"] = {
            "n": est.n, "mean": _round_trip_float(est.mean),
            "ci99_low": _round_trip_float(est.ci_low),
            "ci99_high": _round_trip_float(est.ci_high),
            "seed": scenario.seed,
        }
    return report


def run_oracle(scenario: Scenario) -> dict:
    """Lattice LP ladder converging to the analytic dual value."""
    if scenario.mode == "time0":
        t0 = solve_time0(scenario.nu, scenario.a, scenario.b)
        target = t0.value
        a_eval, b_eval = scenario.a, scenario.b
        mu = scenario.require_mu()
    else:
        solution = _solve(scenario)
        target = solution.case.dual_value
        a_eval, b_eval = solution.instance.a, solution.instance.b
        mu = solution.instance.mu
    ladder = []
    n_mu, n_nu = scenario.oracle_n_mu, scenario.oracle_n_nu
    for div in (4, 2, 1):
        nm, nn = max(2, n_mu // div), max(2, n_nu // div)
        inst = lp_oracle.discretize(mu, scenario.nu, nm, nn, a=a_eval, b=b_eval)
        res = lp_oracle.solve_primal_lp(inst)
        ladder.append({
            "n_mu": nm, "n_nu": nn,
            "value": _round_trip_float(res.value),
            "error_vs_dual": _round_trip_float(res.value - target),
            "max_residual": _round_trip_float(res.max_residual),
        })
    return {
        "command": "oracle", "mode": scenario.mode,
        "dual_value": _round_trip_float(target),
        "ladder": ladder,
        "monotone_decay": all(
            abs(ladder[i]["error_vs_dual"]) >= abs(ladder[i + 1]["error_vs_dual"])
            for i in range(len(ladder) - 1)),
    }


def run_reduce(scenario: Scenario, hedge_text: str) -> tuple[dict, str]:
    """Run the cost-reduction pipeline on a superhedge file's contents."""
    mu = scenario.require_mu()
    nu = scenario.nu
    pair = normalize_payoffs(scenario.a, scenario.b, -1.05 * nu.hi, 1.05 * nu.hi)
    hedge = hedging.load_superhedge(hedge_text)
    check = hedging.verify_superhedge(hedge, pair.a, pair.b)
    if not check.ok:
        raise AssumptionViolatedError(
            f"input portfolio is not a superhedge: violation "
            f"{check.worst_violation:.3e} at {check.at} ({check.inequality})")
    trail = hedging.reduce_superhedge(hedge, pair.a, pair.b, mu, nu)
    final = trail[-1][1]
    report = {
        "command": "reduce",
        "cost_trail": [{"stage": name, "cost": _round_trip_float(s.cost)}
                       for name, s in trail],
        "non_increasing": all(
            trail[i][1].cost >= trail[i + 1][1].cost - 1e-8
            for i in range(len(trail) - 1)),
        "final_stage": "collapse",
    }
    return report, hedging.dump_superhedge(final)


def run_report(scenario: Scenario) -> tuple[dict, dict]:
    """Solve plus plot-ready CSV payloads (hedge curves, maps, regions)."""
    report = run_solve(scenario, mc_paths=0)
    files: dict[str, str] = {}
    if scenario.mode == "time0":
        sol = solve_time0(scenario.nu, scenario.a, scenario.b)
        xs = np.linspace(scenario.nu.lo, scenario.nu.hi, 1001)
        lines = ["x,psi_star"]
        for x, v in zip(xs, sol.psi(xs)):
            lines.append(f"{x!r},{v!r}")
        files["psi_star.csv"] = "\n".join(lines) + "\n"
        return report, files
    solution = _solve(scenario)
    model = build_model(solution)
    inst = solution.instance
    xs = np.linspace(inst.nu.lo, inst.nu.hi, 1001)
    psi = solution.case.psi_star(xs)
    phi = np.maximum(inst.a(xs) - psi, 0.0)
    lines = ["x,psi_star,phi_star"]
    for row in zip(xs, psi, phi):
        lines.append(",".join(repr(float(v)) for v in row))
    files["hedge_curves.csv"] = "\n".join(lines) + "\n"
    if inst.right_map is not None:
        files["curtain_right.csv"] = inst.right_map.to_csv()
        files["curtain_left.csv"] = inst.left_map.to_csv()
    region_lines = ["label,kind,stop_time,part_lo,part_hi"]
    for r in model.regions:
        for lo, hi in r.parts:
            region_lines.append(f"{r.label},{r.kind},{r.stop_time},{lo!r},{hi!r}")
    files["regions.csv"] = "\n".join(region_lines) + "\n"
    coupling = check_coupling(model, n_bins=256)
    report["coupling_check"] = {
        "n_bins": coupling.n_bins,
        "cdf_sup_error": _round_trip_float(coupling.cdf_sup_error),
        "max_mean_residual": _round_trip_float(coupling.max_mean_residual),
    }
    return report, files
