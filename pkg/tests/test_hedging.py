import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bermudan_bounds import (GridFunction, InvalidSpecError, convex_envelope,
                             gaussian, quadratic)
from bermudan_bounds.grids import is_convex
from bermudan_bounds.hedging import (Superhedge, collapse_psi, convexify_psi,
                                     dump_superhedge, generate_superhedge,
                                     hedging_cost, load_superhedge,
                                     reduce_superhedge, tighten_phi,
                                     verify_superhedge)


def grid(lo=-1.0, hi=1.0, n=401):
    return np.linspace(lo, hi, n)


class TestConvexEnvelope:
    def test_abs_unchanged(self):
        g = grid()
        f = GridFunction(g, np.abs(g))
        assert np.allclose(convex_envelope(f).values, f.values)

    def test_double_well_hull(self):
        # x^4 - x^2 has hull -1/4 on [-1/sqrt(2), 1/sqrt(2)], itself outside
        g = grid(-2.0, 2.0, 2001)
        f = GridFunction(g, g ** 4 - g ** 2)
        env = convex_envelope(f)
        inner = np.abs(g) <= 1 / math.sqrt(2) - 0.01
        outer = np.abs(g) >= 1 / math.sqrt(2) + 0.01
        h = g[1] - g[0]
        assert np.max(np.abs(env.values[inner] + 0.25)) < 5 * h ** 2 + 1e-6
        assert np.allclose(env.values[outer], f.values[outer], atol=1e-12)

    def test_line_equivariance(self):
        g = grid(-2.0, 2.0, 501)
        rng = np.random.default_rng(7)
        vals = rng.normal(size=g.shape)
        line = 0.7 * g - 0.3
        lhs = convex_envelope(GridFunction(g, vals + line)).values
        rhs = convex_envelope(GridFunction(g, vals)).values + line
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=60),
           st.integers(0, 2 ** 31 - 1))
    def test_envelope_properties_random(self, vals, seed):
        rng = np.random.default_rng(seed)
        g = np.sort(rng.uniform(-5, 5, size=len(vals)))
        g = g + np.arange(len(g)) * 1e-9  # enforce strict increase
        f = GridFunction(g, np.asarray(vals))
        env = convex_envelope(f)
        assert np.all(env.values <= f.values + 1e-12)          # minorant
        assert is_convex(env, 1e-12)                           # convex
        again = convex_envelope(env)
        assert np.max(np.abs(again.values - env.values)) < 1e-9  # idempotent


class TestGenerateVerify:
    def test_quadratic_generator(self):
        # psi = y^2, a = x^2 + 1: phi = 1, theta1 = -2x and the exercise-1
        # inequality collapses to (y - x)^2 >= 0
        g = grid(-3.0, 3.0, 601)
        psi = GridFunction(g, g ** 2)
        a = quadratic(1.0, 1.0)
        b = quadratic(0.0, 1.0)
        s = generate_superhedge(psi, a, b)
        assert np.allclose(s.phi.values, 1.0, atol=1e-12)
        # right slope of the sampled parabola at node x is 2x + h
        h = g[1] - g[0]
        assert np.max(np.abs(s.theta1.values[:-1] + (2 * g[:-1] + h))) < 1e-9
        assert np.allclose(s.theta2.values, 0.0)
        assert verify_superhedge(s, a, b).ok

    def test_psi_equal_b(self):
        g = grid(-2.0, 2.0, 301)
        b = quadratic(0.0, 1.0)
        a = quadratic(0.5, 1.0)
        s = generate_superhedge(GridFunction(g, b(g)), a, b)
        assert np.allclose(s.phi.values, np.maximum(a(g) - b(g), 0.0))

    def test_psi_above_a_gives_zero_phi(self):
        g = grid(-2.0, 2.0, 301)
        a = quadratic(0.0, 1.0)
        b = quadratic(0.0, 1.0)
        psi = GridFunction(g, a(g) + 1.0)
        s = generate_superhedge(psi, a, b)
        assert np.allclose(s.phi.values, 0.0)

    def test_nonconvex_generator_rejected(self):
        g = grid()
        with pytest.raises(InvalidSpecError):
            generate_superhedge(GridFunction(g, -np.abs(g)), quadratic(0, 1),
                                quadratic(0, 0))

    def test_zero_portfolio_fails_verification(self):
        g = grid()
        zero = GridFunction(g, np.zeros_like(g))
        s = Superhedge(phi=zero, psi=zero, theta1=zero, theta2=zero)
        res = verify_superhedge(s, lambda x: np.ones_like(x),
                                lambda y: np.zeros_like(y))
        assert not res.ok
        assert res.worst_violation == pytest.approx(-1.0)
        assert res.inequality == "exercise-1"


class TestHedgingCost:
    def test_gaussian_second_moment(self):
        nu = gaussian(math.sqrt(2.0))
        mu = gaussian(1.0)
        g = np.linspace(nu.lo, nu.hi, 20001)
        phi = GridFunction(g, np.zeros_like(g))
        psi = GridFunction(g, g ** 2)
        assert hedging_cost(phi, psi, mu, nu) == pytest.approx(2.0, abs=1e-6)

    def test_constants(self):
        mu, nu = gaussian(1.0), gaussian(math.sqrt(2.0))
        g = np.linspace(nu.lo, nu.hi, 101)
        c = 3.25
        phi = GridFunction(g, np.full_like(g, c))
        psi = GridFunction(g, np.zeros_like(g))
        assert hedging_cost(phi, psi, mu, nu) == pytest.approx(c, abs=1e-8)

    def test_divergence_guard(self):
        mu, nu = gaussian(1.0), gaussian(math.sqrt(2.0))
        g = np.linspace(-1.0, 1.0, 11)
        phi = GridFunction(g, np.full_like(g, 1e13))
        psi = GridFunction(g, np.zeros_like(g))
        assert hedging_cost(phi, psi, mu, nu) == math.inf
        # and a divergent negative phi with a divergent positive psi is +inf
        phi_neg = GridFunction(g, np.full_like(g, -1e13))
        psi_pos = GridFunction(g, np.full_like(g, 1e13))
        assert hedging_cost(phi_neg, psi_pos, mu, nu) == math.inf


def _random_valid_superhedge(rng, a, b, lo, hi, n=301):
    """Random convex psi >= b, then validity-preserving perturbations."""
    g = np.linspace(lo, hi, n)
    psi_vals = np.asarray(b(g)) + rng.uniform(0.0, 1.0)
    for _ in range(rng.integers(1, 5)):
        kink = rng.uniform(lo, hi)
        slope = rng.uniform(0.0, 1.0)
        psi_vals = psi_vals + slope * np.maximum(g - kink, 0.0)
    base = generate_superhedge(GridFunction(g, psi_vals), a, b)
    # nonnegative bumps keep both inequalities intact but break convexity
    bump = rng.uniform(0.0, 0.3) * np.exp(
        -0.5 * ((g - rng.uniform(lo, hi)) / rng.uniform(0.2, 1.0)) ** 2)
    phi_noise = rng.uniform(0.0, 0.2, size=g.shape)
    return Superhedge(
        phi=GridFunction(g, base.phi.values + phi_noise),
        psi=GridFunction(g, psi_vals + bump),
        theta1=base.theta1, theta2=base.theta2)


class TestReductionPipeline:
    def test_stagewise_validity_and_cost_monotonicity(self, gauss_pair):
        mu, nu = gauss_pair
        a = quadratic(2.0, 1.0)
        b = quadratic(0.0, 1.0)
        rng = np.random.default_rng(42)
        for _ in range(20):
            s = _random_valid_superhedge(rng, a, b, nu.lo, nu.hi)
            assert verify_superhedge(s, a, b).ok
            trail = reduce_superhedge(s, a, b, mu, nu)
            costs = [h.cost for _, h in trail]
            for c0, c1 in zip(costs, costs[1:]):
                assert c1 <= c0 + 1e-8
            for _, h in trail[1:]:
                assert h.verified

    def test_collapse_leaves_trivial_envelope(self, gauss_pair):
        mu, nu = gauss_pair
        a = quadratic(2.0, 1.0)
        b = quadratic(0.0, 1.0)
        rng = np.random.default_rng(43)
        s = _random_valid_superhedge(rng, a, b, nu.lo, nu.hi)
        final = reduce_superhedge(s, a, b, mu, nu)[-1][1]
        resid = convex_envelope(
            final.psi.with_values(final.psi.values - b(final.psi.grid)))
        assert np.max(np.abs(resid.values)) <= 1e-9 * (
            1 + np.max(np.abs(b(final.psi.grid))))

    def test_convexify_already_convex_is_identity(self, gauss_pair):
        mu, nu = gauss_pair
        a = quadratic(1.5, 1.0)
        b = quadratic(0.0, 1.0)
        g = np.linspace(nu.lo, nu.hi, 301)
        s = generate_superhedge(GridFunction(g, b(g) + 0.5), a, b)
        out = convexify_psi(s, a, b, mu, nu)
        assert np.allclose(out.psi.values, s.psi.values)

    def test_collapse_constant_excess(self, gauss_pair):
        # psi = b + 1 collapses to b with zero cost change of the psi leg
        mu, nu = gauss_pair
        a = quadratic(1.5, 1.0)
        b = quadratic(0.0, 1.0)
        g = np.linspace(nu.lo, nu.hi, 2001)
        s = generate_superhedge(GridFunction(g, b(g) + 1.0), a, b)
        s = tighten_phi(s, a, b, mu, nu)
        out = collapse_psi(s, a, b, mu, nu)
        assert np.max(np.abs(out.psi.values - b(g))) < 1e-10
        # cost drop from the collapse equals int 1 dnu - int 1 dmu = 0
        assert out.cost == pytest.approx(s.cost, abs=1e-8)

    def test_collapse_abs_excess_cost_drop(self, gauss_pair):
        # psi = b + |x|: the drop is int |x| d(nu - mu) >= 0 by convex order
        mu, nu = gauss_pair
        a = quadratic(1.5, 1.0)
        b = quadratic(0.0, 1.0)
        g = np.linspace(nu.lo, nu.hi, 4001)
        s = generate_superhedge(GridFunction(g, b(g) + np.abs(g)), a, b)
        s = tighten_phi(s, a, b, mu, nu)
        out = collapse_psi(s, a, b, mu, nu)
        # E|X| for N(0, s^2) is s sqrt(2/pi)
        want_drop = math.sqrt(2.0 / math.pi) * (math.sqrt(2.0) - 1.0)
        drop = s.cost - out.cost
        assert drop == pytest.approx(want_drop, abs=1e-4)
        assert drop >= -1e-12


class TestSuperhedgeFiles:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(3)
        g = np.sort(rng.uniform(-3, 3, 57))
        g[0] -= 1.0  # ensure strictly increasing with margin
        g = np.unique(g)
        s = Superhedge(
            phi=GridFunction(g, rng.normal(size=g.shape)),
            psi=GridFunction(g, rng.normal(size=g.shape)),
            theta1=GridFunction(g, rng.normal(size=g.shape)),
            theta2=GridFunction(g, rng.normal(size=g.shape)))
        text = dump_superhedge(s)
        back = load_superhedge(text)
        assert np.array_equal(back.phi.grid, s.phi.grid)
        for attr in ("phi", "psi", "theta1", "theta2"):
            assert np.array_equal(getattr(back, attr).values,
                                  getattr(s, attr).values)
        assert dump_superhedge(back) == text

    def test_bad_header_rejected(self):
        with pytest.raises(InvalidSpecError):
            load_superhedge("x,phi\n0.0,1.0\n")
