import math

import numpy as np
import pytest

from bermudan_bounds import gaussian, quadratic
from bermudan_bounds.hedging import generate_superhedge, hedging_cost
from bermudan_bounds.primal_models import (build_model, canonical_value,
                                           check_coupling, primal_value,
                                           sample_paths)
from bermudan_bounds.quadrature import integrate_against
from bermudan_bounds.solver import solve_bermudan


class TestRegionTables:
    def test_c1_stop_regions(self, solved_suite, suite_models):
        model = suite_models["gauss_c1"]
        x0 = solved_suite["gauss_c1"].case.thresholds["x0"]
        stops = [r for r in model.regions if r.stop_time == 1]
        parts = sorted(p for r in stops for p in r.parts)
        assert parts[0][1] == pytest.approx(-x0)
        assert parts[1][0] == pytest.approx(x0)
        assert not model.randomization_required

    def test_c2_stop_regions(self, solved_suite, suite_models):
        model = suite_models["gauss_c2"]
        x1 = solved_suite["gauss_c2"].case.thresholds["x1"]
        go = [r for r in model.regions if r.stop_time == 2]
        assert len(go) == 1
        assert go[0].parts == [(-x1, x1)]

    def test_c3_randomized_region(self, solved_suite, suite_models):
        model = suite_models["gauss_c3"]
        t = solved_suite["gauss_c3"].case.thresholds
        rand = [r for r in model.regions if r.kind == "randomized_stay"]
        assert len(rand) == 1
        assert rand[0].parts == [(-t["f_x3"], t["f_x3"])]
        assert model.randomization_required

    def test_stay_probability_is_density_ratio(self, suite_models, gauss_pair):
        mu, nu = gauss_pair
        model = suite_models["gauss_c3t"]
        xs = np.linspace(-0.5, 0.5, 11)
        assert np.allclose(model.stay_probability(xs),
                           nu.pdf(xs) / mu.pdf(xs), atol=1e-13)
        assert np.all(model.stay_probability(xs) <= 1.0)


class TestCouplingValidity:
    @pytest.mark.parametrize("name", ["gauss_c1", "gauss_c2", "gauss_c3",
                                      "gauss_c3t", "tri_c1", "tri_c2",
                                      "tri_c3", "tri_c3t"])
    def test_marginal_reconstruction(self, solved_suite, name):
        sol = solved_suite[name]
        model = build_model(sol, grid_n=2048)
        rep = check_coupling(model, n_bins=512)
        assert rep.cdf_sup_error <= 1e-4, (name, rep.cdf_sup_error)
        assert rep.max_mean_residual <= 1e-12
        assert rep.mass_total == pytest.approx(model.nu.total_mass, abs=1e-7)

    def test_error_halves_under_bin_doubling(self, solved_suite):
        sol = solved_suite["gauss_c1"]
        errs = []
        for nb in (256, 512):
            model = build_model(sol, grid_n=4 * nb)
            errs.append(check_coupling(model, n_bins=nb).cdf_sup_error)
        assert errs[1] <= 0.62 * errs[0]

    def test_stay_region_pushforward_is_identity(self, suite_models):
        # on stay regions the pushforward restricted there equals mu itself:
        # every kernel is a point mass at its source
        model = suite_models["gauss_c3t"]
        stay = [r for r in model.regions if r.kind == "stay"]
        assert stay, "tilde model should have stay wings"
        from bermudan_bounds.primal_models import _region_targets
        xs = np.linspace(stay[1].parts[0][0] + 0.01,
                         stay[1].parts[0][1] - 0.01, 101)
        lo, hi, w_lo, w_hi = _region_targets(stay[1], xs)
        assert np.array_equal(lo, xs) and np.array_equal(hi, xs)

    def test_region_mass_bookkeeping(self, solved_suite):
        # C1: mu restricted to (-alpha, -x0] maps onto mu below f_L(-x0) plus
        # nu on (f_L(-x0), 0)
        sol = solved_suite["gauss_c1"]
        model = build_model(sol, grid_n=1024)
        mu, nu = model.mu, model.nu
        t = sol.case.thresholds
        rep = check_coupling(model, n_bins=512)
        left = next(r for r in rep.regions if r.label == "left-wing")
        want = mu.mass(mu.lo, t["fL_minus_x0"]) + nu.mass(t["fL_minus_x0"], 0.0)
        assert left.mass_in == pytest.approx(mu.mass(mu.lo, -t["x0"]), abs=1e-6)
        assert left.mass_out == pytest.approx(want, abs=1e-6)


class TestPrimalValue:
    def test_strong_duality_all_cases(self, solved_suite, suite_models):
        for name, sol in solved_suite.items():
            model = suite_models[name]
            prim = primal_value(model, sol.instance.a, sol.instance.b)
            assert abs(prim - sol.case.dual_value) <= 2e-4, name
            assert abs(prim - sol.case.dual_value) <= 1e-8, name

    def test_exact_vs_kernel_quadrature(self, solved_suite, suite_models):
        for name in ("gauss_c1", "tri_c3"):
            sol = solved_suite[name]
            model = build_model(sol, grid_n=512)
            exact = primal_value(model, sol.instance.a, sol.instance.b, "exact")
            kern = primal_value(model, sol.instance.a, sol.instance.b, "kernel")
            assert abs(exact - kern) < 5e-5, name

    def test_c1_value_decomposition(self, solved_suite, suite_models):
        # E[a; stop] + int b d(nu - mu) over the two tails
        sol = solved_suite["tri_c1"]
        model = suite_models["tri_c1"]
        inst = sol.instance
        t = sol.case.thresholds
        a, b, mu, nu = inst.a, inst.b, inst.mu, inst.nu
        stop = 2 * integrate_against(a, mu, a.kinks, lo=t["x0"], hi=mu.hi)
        tails = 2 * (integrate_against(b, nu, b.kinks, lo=t["gR_x0"], hi=nu.hi)
                     - integrate_against(b, mu, b.kinks, lo=t["gR_x0"], hi=mu.hi))
        prim = primal_value(model, a, b)
        assert prim == pytest.approx(stop + tails, abs=1e-9)

    def test_degenerate_identity_value(self, gauss_pair):
        # always-continue: the full-line curtain transports mu to nu, so the
        # value is the nu-integral of b
        mu, nu = gauss_pair
        sol = solve_bermudan(mu, nu, quadratic(0.0, 0.0), quadratic(0.0, 1.0))
        model = build_model(sol)
        prim = primal_value(model, sol.instance.a, sol.instance.b)
        want = integrate_against(sol.instance.b, nu, sol.instance.b.kinks)
        assert prim == pytest.approx(want, abs=1e-9)
        kern = primal_value(model, sol.instance.a, sol.instance.b, "kernel")
        assert kern == pytest.approx(want, abs=5e-4)


class TestWeakDuality:
    def test_primal_below_any_verified_cost(self, solved_suite, suite_models):
        for name, sol in solved_suite.items():
            inst = sol.instance
            prim = primal_value(suite_models[name], inst.a, inst.b)
            hedge = generate_superhedge(sol.psi_star_gridfn(), inst.a, inst.b,
                                        convex_tol=1e-8)
            assert hedge.verified
            cost = hedging_cost(hedge.phi, hedge.psi, inst.mu, inst.nu)
            assert prim <= cost + 1e-7, name
            # a strictly costlier generator stays above as well
            rich = sol.psi_star_gridfn()
            rich = rich.with_values(rich.values + 0.1)
            hedge2 = generate_superhedge(rich, inst.a, inst.b, convex_tol=1e-8)
            cost2 = hedging_cost(hedge2.phi, hedge2.psi, inst.mu, inst.nu)
            assert prim <= cost2 + 1e-7, name


class TestRandomizationNecessity:
    def test_canonical_stopping_strictly_worse_on_c3(self, solved_suite,
                                                     suite_models):
        for name in ("gauss_c3", "tri_c3", "gauss_c3t"):
            sol = solved_suite[name]
            model = suite_models[name]
            prim = primal_value(model, sol.instance.a, sol.instance.b)
            canon = canonical_value(model, sol.instance.a, sol.instance.b)
            assert canon < prim - 1e-3, name

    def test_canonical_matches_on_c1(self, solved_suite, suite_models):
        # without randomization the C1 rule is already deterministic in x
        sol = solved_suite["gauss_c1"]
        model = suite_models["gauss_c1"]
        prim = primal_value(model, sol.instance.a, sol.instance.b)
        canon = canonical_value(model, sol.instance.a, sol.instance.b)
        assert canon >= prim - 1e-4  # best-per-x can only improve on tau*


class TestSamplePaths:
    def test_ci_contains_value(self, solved_suite, suite_models):
        sol = solved_suite["gauss_c1"]
        model = suite_models["gauss_c1"]
        prim = primal_value(model, sol.instance.a, sol.instance.b)
        est = sample_paths(model, 10 ** 6, seed=2024, a=sol.instance.a,
                           b=sol.instance.b)
        assert est.contains(prim)
        assert est.stderr < 5e-3

    def test_seed_determinism(self, solved_suite, suite_models):
        sol = solved_suite["tri_c2"]
        model = suite_models["tri_c2"]
        e1 = sample_paths(model, 50_000, seed=7, a=sol.instance.a,
                          b=sol.instance.b)
        e2 = sample_paths(model, 50_000, seed=7, a=sol.instance.a,
                          b=sol.instance.b)
        assert e1.mean == e2.mean and e1.stderr == e2.stderr

    def test_uniform_stream_unused_without_randomization(self, solved_suite,
                                                         suite_models):
        # C1/C2 exercise rules ignore the exogenous uniform draw entirely
        sol = solved_suite["gauss_c2"]
        model = suite_models["gauss_c2"]

        est, paths = sample_paths(model, 20_000, seed=11, a=sol.instance.a,
                                  b=sol.instance.b, return_paths=True)
        x, u, y, tau = paths.T
        inside = np.abs(x) < sol.case.thresholds["x1"]
        assert np.all(tau[inside] == 2)
        assert np.all(tau[~inside] == 1)

    def test_randomized_paths_split_by_uniform(self, solved_suite, suite_models):
        sol = solved_suite["gauss_c3t"]
        model = suite_models["gauss_c3t"]
        est, paths = sample_paths(model, 50_000, seed=13, a=sol.instance.a,
                                  b=sol.instance.b, return_paths=True)
        x, u, y, tau = paths.T
        centre = np.abs(x) < sol.instance.e
        stay = model.stay_probability(x[centre])
        assert np.all((u[centre] <= stay) == (tau[centre] == 1))
        # stayed mass keeps its position, jumped mass leaves the centre
        stayed = centre & (tau == 1)
        assert np.allclose(y[stayed], x[stayed])
