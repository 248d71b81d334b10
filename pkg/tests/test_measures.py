import math

import numpy as np
import pytest

from bermudan_bounds import (ConvexOrderError, DispersionError,
                             InvalidSpecError, atoms, check_convex_order,
                             check_dispersion, gaussian, make_measure, table,
                             triangle, uniform)
from bermudan_bounds.errors import DispersionError as DErr


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile_bisect(p, lo=-20.0, hi=20.0):
    """Independent inverse-CDF oracle: plain bisection on erfc."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normal_potential(k, sigma):
    """E|X - k| for X ~ N(0, sigma^2), closed form."""
    z = k / sigma
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return 2.0 * sigma * pdf + k * (2.0 * normal_cdf(z) - 1.0)


class TestMakeMeasure:
    def test_gaussian_truncated_support(self):
        m = gaussian(1.0, trunc_quantile=1e-9)
        edge = -normal_quantile_bisect(1e-9)
        assert m.lo == pytest.approx(-edge, abs=1e-9)
        assert m.hi == pytest.approx(edge, abs=1e-9)
        assert abs(edge - 6.0) < 0.01  # the 1e-9 quantile sits at ~6 sigma
        assert m.mean == pytest.approx(0.0, abs=1e-12)
        assert m.mass_deficit == pytest.approx(2e-9, abs=1e-10)

    def test_uniform_density_and_mean(self):
        m = uniform(1.0)
        xs = np.linspace(-0.99, 0.99, 7)
        assert np.allclose(m.pdf(xs), 0.5)
        assert m.mean == pytest.approx(0.0, abs=1e-14)
        assert m.total_mass == pytest.approx(1.0, abs=1e-12)

    def test_triangle_density_and_median(self):
        m = triangle(1.0)
        assert m.pdf(0.25) == pytest.approx(0.75, abs=1e-13)
        assert m.cdf(0.0) == pytest.approx(0.5, abs=1e-12)

    def test_invalid_specs_rejected(self):
        with pytest.raises(InvalidSpecError):
            table([0.0, 1.0, 0.5], [1.0, 1.0, 1.0])  # non-increasing xs
        with pytest.raises(InvalidSpecError):
            table([-1.0, 0.0, 1.0], [1.0, -0.2, 1.0])  # negative density
        with pytest.raises(InvalidSpecError):
            make_measure({"family": "nope"})
        with pytest.raises(InvalidSpecError):
            make_measure({"family": "gaussian"})  # missing sigma

    def test_mass_invariant_via_quadrature(self):
        for m in (gaussian(1.0), uniform(2.0), triangle(1.0)):
            q = m.mass_quad(m.lo, m.hi)
            assert 1.0 - 2.0 * m.trunc_quantile - 1e-9 <= q <= 1.0 + 1e-9

    def test_cached_cdf_matches_quadrature(self):
        m = gaussian(math.sqrt(2.0))
        for a, b in [(-1.3, 0.7), (0.1, 4.0), (-6.0, -2.0)]:
            assert m.mass(a, b) == pytest.approx(m.mass_quad(a, b), abs=2e-11)
            assert m.first_moment(a, b) == pytest.approx(
                m.first_moment_quad(a, b), abs=2e-11)


class TestPotential:
    def test_matches_normal_closed_form(self):
        m = gaussian(1.0)
        ks = np.linspace(-4.0, 4.0, 17)
        want = np.array([normal_potential(k, 1.0) for k in ks])
        # the only discrepancy allowed is the 1e-9 tail truncation
        assert np.max(np.abs(m.potential(ks) - want)) < 5e-8

    def test_convexity_and_lower_bound(self):
        for m in (gaussian(1.0), triangle(1.0), uniform(2.0)):
            pot = m.potential_fn()
            ks = pot.grid
            u = pot(ks)
            chords = 0.5 * (u[:-2] + u[2:])
            assert np.min(chords - u[1:-1]) >= -1e-10
            # lower bound holds up to the declared tail truncation
            slack = 1e-9 + 2.0 * m.trunc_quantile * np.max(np.abs(ks))
            assert np.all(u >= np.abs(m.mean - ks) - slack)

    def test_asymptotes(self):
        m = gaussian(1.0)
        for k in (-25.0, 25.0):
            assert m.potential(k) == pytest.approx(abs(k - m.mean), abs=1e-7)


class TestConvexOrder:
    def test_normal_pair_ordered(self):
        res = check_convex_order(gaussian(1.0), gaussian(math.sqrt(2.0)), 1e-8)
        assert res.ordered

    def test_identical_laws(self):
        m = gaussian(1.0)
        res = check_convex_order(m, m, 1e-8)
        assert res.ordered
        assert abs(res.worst_gap) <= 1e-12

    def test_reversed_pair_fails_with_witness(self):
        res = check_convex_order(gaussian(math.sqrt(2.0)), gaussian(1.0), 1e-8)
        assert not res.ordered
        # the violation, by the closed form, peaks at k = 0
        want = normal_potential(0.0, math.sqrt(2.0)) - normal_potential(0.0, 1.0)
        assert res.worst_gap == pytest.approx(want, abs=1e-6)
        assert abs(res.worst_k) < 0.05

    def test_tri_uniform_ordered(self):
        assert check_convex_order(triangle(1.0), uniform(2.0), 1e-8).ordered


class TestDispersion:
    def test_gaussian_crossing_closed_form(self):
        e = check_dispersion(gaussian(1.0), gaussian(math.sqrt(2.0)))
        # rho = eta solves exp(-e^2/4) = 1/sqrt(2)
        assert e == pytest.approx(math.sqrt(2.0 * math.log(2.0)), abs=1e-10)

    def test_triangle_uniform_crossing(self):
        e = check_dispersion(triangle(1.0), uniform(2.0))
        assert e == pytest.approx(0.75, abs=1e-10)  # 1 - e = 1/4

    def test_identical_uniforms_refused(self):
        with pytest.raises(DispersionError):
            check_dispersion(uniform(1.0), uniform(1.0))

    def test_strictness_at_probe_points(self):
        mu, nu = gaussian(1.0), gaussian(math.sqrt(2.0))
        e = check_dispersion(mu, nu)
        beta = nu.hi
        assert mu.pdf(e / 2) > nu.pdf(e / 2)
        mid_outer = 0.5 * (e + beta)
        assert nu.pdf(mid_outer) > mu.pdf(mid_outer)


class TestAtomsAndQuantile:
    def test_atoms_basic(self):
        m = atoms([-1.0, 1.0], [0.5, 0.5])
        assert m.mean == pytest.approx(0.0)
        assert m.cdf(0.0) == pytest.approx(0.5)
        assert m.potential(0.0) == pytest.approx(1.0)

    def test_quantile_inverts_cdf(self):
        m = gaussian(1.0)
        for p in (0.1, 0.5, 0.975):
            x = m.quantile(p)
            assert m.cdf(x) == pytest.approx(p, abs=1e-10)

    def test_symmetry_flags(self):
        assert gaussian(2.0).symmetric
        assert triangle(0.5).symmetric
        assert not table([0.0, 1.0, 2.0], [0.0, 1.0, 0.0]).symmetric
