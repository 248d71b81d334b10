"""One-dimensional laws with cached CDF / partial-moment evaluators.

A :class:`Measure` is either a density on an open interval (the analytic
solver path) or a finite atom list (accepted only by the lattice oracle).
Unbounded supports are truncated at a configurable tail mass per side; the
resulting mass deficit is recorded, never renormalized away.

The cached evaluators are built once per measure: the density and its first
moment are integrated panel-by-panel with 7-point Gauss-Legendre on a fine
grid, accumulated, and interpolated (shape-preserving cubic for the CDF, a
smooth cubic spline for the partial first moment).  Everything downstream
(convex-order tests, coupling equations, hedge costs) reduces to differences
of these two primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.special import ndtri

from .errors import DispersionError, InvalidSpecError

DEFAULT_TRUNC_QUANTILE = 1e-9
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(7)
_DEFAULT_PANELS = 16384


def _panel_integrals(pdf: Callable[[np.ndarray], np.ndarray], edges: np.ndarray):
    """Gauss-Legendre mass and first-moment of ``pdf`` on each panel."""
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    w = half[:, None] * _GL_WEIGHTS[None, :]
    p = pdf(x)
    return np.sum(w * p, axis=1), np.sum(w * p * x, axis=1)


class Measure:
    """A one-dimensional law with density (or atoms) and cached evaluators."""

    def __init__(
        self,
        *,
        kind: str,
        lo: float,
        hi: float,
        pdf: Callable[[np.ndarray], np.ndarray] | None = None,
        atoms: tuple[np.ndarray, np.ndarray] | None = None,
        trunc_quantile: float = 0.0,
        symmetric: bool = False,
        family: dict | None = None,
        breaks: Sequence[float] = (),
        n_panels: int = _DEFAULT_PANELS,
    ):
        if kind not in ("density", "atoms"):
            raise InvalidSpecError(f"unknown measure kind {kind!r}")
        self.kind = kind
        self.lo = float(lo)
        self.hi = float(hi)
        self.trunc_quantile = float(trunc_quantile)
        self.symmetric = bool(symmetric)
        self.family = dict(family or {})

        if kind == "density":
            if pdf is None:
                raise InvalidSpecError("density measure needs a pdf")
            self._pdf = pdf
            edges = np.linspace(self.lo, self.hi, n_panels + 1)
            if breaks:
                edges = np.unique(np.concatenate([edges, np.asarray(breaks, float)]))
                edges = edges[(edges >= self.lo) & (edges <= self.hi)]
            masses, moments = _panel_integrals(pdf, edges)
            if np.min(masses) < -1e-13:
                raise InvalidSpecError("negative density sample")
            cdf_vals = np.concatenate([[0.0], np.cumsum(masses)])
            m1_vals = np.concatenate([[0.0], np.cumsum(moments)])
            self._grid = edges
            self._F = PchipInterpolator(edges, cdf_vals)
            self._M1 = CubicSpline(edges, m1_vals)
            self.total_mass = float(cdf_vals[-1])
            self._total_m1 = float(m1_vals[-1])
        else:
            if atoms is None:
                raise InvalidSpecError("atom measure needs locations and weights")
            locs, weights = (np.asarray(a, float) for a in atoms)
            order = np.argsort(locs)
            self.atom_locs = locs[order]
            self.atom_weights = weights[order]
            if np.any(self.atom_weights < 0):
                raise InvalidSpecError("negative atom weight")
            self._atom_cum = np.cumsum(self.atom_weights)
            self._atom_cum_m1 = np.cumsum(self.atom_weights * self.atom_locs)
            self.total_mass = float(self._atom_cum[-1])
            self._total_m1 = float(self._atom_cum_m1[-1])

        self.mass_deficit = 1.0 - self.total_mass
        if not (self.mass_deficit <= 2.0 * self.trunc_quantile + 1e-9):
            raise InvalidSpecError(
                f"measure mass {self.total_mass:.12g} deficient beyond the "
                f"declared truncation {self.trunc_quantile:g}"
            )
        if self.total_mass > 1.0 + 1e-9:
            raise InvalidSpecError(f"measure mass {self.total_mass:.12g} exceeds 1")
        self.mean = self._total_m1 / self.total_mass

    # -- primitive evaluators -------------------------------------------------

    def pdf(self, x):
        if self.kind != "density":
            raise InvalidSpecError("atom measures have no density")
        x = np.asarray(x, float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x)
        inside = (xv > self.lo) & (xv < self.hi)
        out = np.zeros_like(xv)
        if np.any(inside):
            out[inside] = self._pdf(xv[inside])
        return float(out[0]) if scalar else out

    def cdf(self, x):
        x = np.asarray(x, float)
        if self.kind == "density":
            xc = np.clip(x, self.lo, self.hi)
            out = np.asarray(self._F(xc), float)
        else:
            idx = np.searchsorted(self.atom_locs, x, side="right")
            out = np.where(idx > 0, self._atom_cum[np.maximum(idx - 1, 0)], 0.0)
        return out if out.ndim else float(out)

    def partial_first_moment(self, x):
        """``integral of z d(measure) over (lo, x]``."""
        x = np.asarray(x, float)
        if self.kind == "density":
            xc = np.clip(x, self.lo, self.hi)
            out = np.asarray(self._M1(xc), float)
        else:
            idx = np.searchsorted(self.atom_locs, x, side="right")
            out = np.where(idx > 0, self._atom_cum_m1[np.maximum(idx - 1, 0)], 0.0)
        return out if out.ndim else float(out)

    def mass(self, a, b):
        return self.cdf(b) - self.cdf(a)

    def first_moment(self, a, b):
        return self.partial_first_moment(b) - self.partial_first_moment(a)

    def potential(self, k):
        """U(k) = integral of |x-k| d(measure)."""
        k = np.asarray(k, float)
        out = (
            k * (2.0 * self.cdf(k) - self.total_mass)
            - 2.0 * self.partial_first_moment(k)
            + self._total_m1
        )
        return out if out.ndim else float(out)

    def potential_fn(self, n: int = 2001) -> "Potential":
        grid = np.linspace(self.lo, self.hi, n)
        return Potential(evaluator=self.potential, grid=grid)

    def quantile(self, u):
        """Inverse CDF, vectorized bisection on the cached CDF."""
        u = np.asarray(u, float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        if self.kind == "atoms":
            idx = np.searchsorted(self._atom_cum, u * self.total_mass, side="left")
            out = self.atom_locs[np.clip(idx, 0, len(self.atom_locs) - 1)]
            return float(out[0]) if scalar else out
        lo = np.full(u.shape, self.lo)
        hi = np.full(u.shape, self.hi)
        target = np.clip(u, 0.0, 1.0) * 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        return float(out[0]) if scalar else out

    # -- slow, independent integrators (used by residual rechecks) ------------

    def mass_quad(self, a, b):
        a = max(a, self.lo)
        b = min(b, self.hi)
        if b <= a:
            return 0.0
        val, _ = integrate.quad(lambda z: float(self._pdf(np.asarray([z]))[0]),
                                a, b, epsabs=1e-13, epsrel=1e-12, limit=300)
        return val

    def first_moment_quad(self, a, b):
        a = max(a, self.lo)
        b = min(b, self.hi)
        if b <= a:
            return 0.0
        val, _ = integrate.quad(lambda z: z * float(self._pdf(np.asarray([z]))[0]),
                                a, b, epsabs=1e-13, epsrel=1e-12, limit=300)
        return val

    def restricted(self, parts) -> "Restriction":
        return Restriction([(1.0, self)], parts)

    def __repr__(self):
        fam = self.family.get("family", self.kind)
        return f"Measure({fam}, support=({self.lo:.6g}, {self.hi:.6g}))"


@dataclass
class Potential:
    """Potential function U(k) with its probe grid."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    grid: np.ndarray

    def __call__(self, k):
        return self.evaluator(k)


class Restriction:
    """A signed combination of measures restricted to a union of intervals.

    Used for the sub-probability inputs of the two-tail coupling solver,
    e.g. ``mu`` restricted to an annulus, or ``(nu - mu)`` on outer tails.
    All evaluators fall back on the parents' caches, so construction is free.
    """

    def __init__(self, components, parts):
        self.components = [(float(c), m) for c, m in components]
        parts = sorted((float(a), float(b)) for a, b in parts)
        for (a0, b0), (a1, _) in zip(parts, parts[1:]):
            if b0 > a1 + 1e-15:
                raise InvalidSpecError("restriction parts must be disjoint")
        self.parts = [(a, b) for a, b in parts if b > a]
        if not self.parts:
            raise InvalidSpecError("empty restriction")
        self.lo = self.parts[0][0]
        self.hi = self.parts[-1][1]
        self.mass = float(self.cdf(self.hi))
        self.total_first_moment = float(self.first_moment_below(self.hi))
        self.mean = self.total_first_moment / self.mass if self.mass > 0 else 0.0

    def density(self, x):
        x = np.asarray(x, float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.parts:
            inside |= (x > a) & (x < b)
        out = np.zeros_like(x)
        for c, m in self.components:
            out += c * m.pdf(x)
        out = np.where(inside, out, 0.0)
        return out if out.ndim else float(out)

    def _accumulate(self, x, attr):
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        for a, b in self.parts:
            xc = np.clip(x, a, b)
            for c, m in self.components:
                out += c * (getattr(m, attr)(xc) - getattr(m, attr)(a))
        return out

    def cdf(self, x):
        out = self._accumulate(x, "cdf")
        return out if out.ndim else float(out)

    def first_moment_below(self, x):
        out = self._accumulate(x, "partial_first_moment")
        return out if out.ndim else float(out)

    def tail_mass(self, x):
        return self.mass - self.cdf(x)

    def tail_first_moment(self, x):
        return self.total_first_moment - self.first_moment_below(x)

    def quantile(self, u):
        """x with cdf(x) = u, snapped into a support part."""
        u = np.asarray(u, float)
        scalar = u.ndim == 0
        u = np.atleast_1d(np.clip(u, 0.0, self.mass))
        lo = np.full(u.shape, self.lo)
        hi = np.full(u.shape, self.hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        # the cdf is flat on gaps between parts; snap into the nearest part
        edges = np.array([e for p in self.parts for e in p])
        starts = edges[0::2]
        ends = edges[1::2]
        for i, v in enumerate(out):
            k = np.searchsorted(ends, v)
            if k < len(starts) and v < starts[k]:
                # inside the gap before part k: snap to the nearer edge
                left = ends[k - 1] if k > 0 else starts[0]
                out[i] = left if (v - left) < (starts[k] - v) else starts[k]
        return float(out[0]) if scalar else out

    def min_density_on_probe(self, n: int = 1001) -> float:
        worst = np.inf
        for a, b in self.parts:
            xs = np.linspace(a, b, max(16, n // len(self.parts)))[1:-1]
            worst = min(worst, float(np.min(self.density(xs))))
        return worst


# -- family constructors ------------------------------------------------------


def gaussian(sigma: float, trunc_quantile: float = DEFAULT_TRUNC_QUANTILE) -> Measure:
    if sigma <= 0 or not math.isfinite(sigma):
        raise InvalidSpecError("gaussian sigma must be positive and finite")
    edge = float(-sigma * ndtri(trunc_quantile))
    inv = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def pdf(x):
        return inv * np.exp(-0.5 * (x / sigma) ** 2)

    return Measure(kind="density", lo=-edge, hi=edge, pdf=pdf,
                   trunc_quantile=trunc_quantile, symmetric=True,
                   family={"family": "gaussian", "sigma": sigma})


def uniform(half_width: float) -> Measure:
    if half_width <= 0 or not math.isfinite(half_width):
        raise InvalidSpecError("uniform half_width must be positive and finite")
    h = float(half_width)

    def pdf(x):
        return np.full_like(np.asarray(x, float), 0.5 / h)

    return Measure(kind="density", lo=-h, hi=h, pdf=pdf, symmetric=True,
                   family={"family": "uniform", "half_width": h})


def triangle(half_width: float) -> Measure:
    if half_width <= 0 or not math.isfinite(half_width):
        raise InvalidSpecError("triangle half_width must be positive and finite")
    h = float(half_width)

    def pdf(x):
        return np.maximum(0.0, 1.0 - np.abs(np.asarray(x, float)) / h) / h

    return Measure(kind="density", lo=-h, hi=h, pdf=pdf, symmetric=True,
                   breaks=[0.0], family={"family": "triangle", "half_width": h})


def table(xs: Sequence[float], densities: Sequence[float]) -> Measure:
    xs = np.asarray(xs, float)
    ds = np.asarray(densities, float)
    if len(xs) < 2 or np.any(np.diff(xs) <= 0):
        raise InvalidSpecError("table xs must be strictly increasing")
    if np.any(ds < 0):
        raise InvalidSpecError("negative density sample")

    def interp(x):
        return np.interp(np.asarray(x, float), xs, ds)

    sym = bool(np.allclose(interp(-xs), ds, atol=1e-12))
    return Measure(kind="density", lo=float(xs[0]), hi=float(xs[-1]), pdf=interp,
                   symmetric=sym, breaks=list(xs),
                   family={"family": "table", "xs": list(map(float, xs)),
                           "densities": list(map(float, ds))})


def atoms(locs: Sequence[float], weights: Sequence[float]) -> Measure:
    locs = np.asarray(locs, float)
    weights = np.asarray(weights, float)
    if len(locs) != len(weights) or len(locs) == 0:
        raise InvalidSpecError("atoms need matching nonempty locs and weights")
    sym_probe = np.allclose(sorted(locs), sorted(-locs), atol=1e-12)
    return Measure(kind="atoms", lo=float(np.min(locs)), hi=float(np.max(locs)),
                   atoms=(locs, weights), symmetric=bool(sym_probe),
                   family={"family": "atoms", "locs": list(map(float, locs)),
                           "weights": list(map(float, weights))})


_FAMILIES = {
    "gaussian": lambda spec, tq: gaussian(spec["sigma"], tq),
    "uniform": lambda spec, tq: uniform(spec["half_width"]),
    "triangle": lambda spec, tq: triangle(spec["half_width"]),
    "table": lambda spec, tq: table(spec["xs"], spec["densities"]),
    "atoms": lambda spec, tq: atoms(spec["locs"], spec["weights"]),
}


def make_measure(spec: dict, trunc_quantile: float = DEFAULT_TRUNC_QUANTILE) -> Measure:
    """Build a measure from a family descriptor (see the scenario schema)."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise InvalidSpecError("measure descriptor needs a 'family' key")
    family = spec["family"]
    if family not in _FAMILIES:
        raise InvalidSpecError(f"unknown measure family {family!r}")
    try:
        return _FAMILIES[family](spec, trunc_quantile)
    except KeyError as exc:
        raise InvalidSpecError(f"measure family {family!r} missing parameter {exc}") from exc


# -- convex order and dispersion ----------------------------------------------


@dataclass
class ConvexOrderResult:
    ordered: bool
    worst_k: float
    worst_gap: float  # max over the probe grid of U_mu(k) - U_nu(k), signed
    mean_gap: float

    def __bool__(self):
        return self.ordered


def check_convex_order(mu: Measure, nu: Measure, tol: float = 1e-8,
                       n_probe: int = 2001) -> ConvexOrderResult:
    """Potential-function test for mu <=_cx nu on a probe grid."""
    if n_probe < 1001:
        n_probe = 1001
    lo = min(mu.lo, nu.lo)
    hi = max(mu.hi, nu.hi)
    ks = np.linspace(lo, hi, n_probe)
    gaps = mu.potential(ks) - nu.potential(ks)
    i = int(np.argmax(gaps))
    mean_gap = abs(mu.mean - nu.mean)
    ordered = bool(mean_gap <= tol and gaps[i] <= tol)
    return ConvexOrderResult(ordered, float(ks[i]), float(gaps[i]), float(mean_gap))


def check_dispersion(mu: Measure, nu: Measure, n_probe: int = 2001) -> float:
    """Locate the single density crossing e in (0, alpha).

    Requires symmetric densities with rho > eta on (0, e) and eta > rho on
    (e, beta); refuses the instance otherwise.
    """
    if mu.kind != "density" or nu.kind != "density":
        raise DispersionError("dispersion test needs density measures")
    if not (mu.symmetric and nu.symmetric):
        raise DispersionError("dispersion test needs symmetric measures")
    alpha, beta = mu.hi, nu.hi

    def diff(x):
        return mu.pdf(x) - nu.pdf(x)

    if diff(np.asarray(0.0)) <= 0:
        raise DispersionError("rho(0) <= eta(0): no dispersion crossing")
    xs = np.linspace(0.0, alpha, n_probe)[1:-1]
    signs = np.sign(diff(xs))
    neg = np.where(signs < 0)[0]
    if len(neg) == 0:
        raise DispersionError("densities do not cross on (0, alpha)")
    lo, hi = xs[neg[0] - 1] if neg[0] > 0 else 0.0, xs[neg[0]]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if diff(np.asarray(mid)) > 0:
            lo = mid
        else:
            hi = mid
    e = 0.5 * (lo + hi)

    # single-crossing verification on a probe grid with a small guard band
    guard = 1e-6 * (beta - 0.0)
    inner = np.linspace(guard, e - guard, n_probe // 2)
    outer = np.linspace(e + guard, beta - guard, n_probe // 2)
    if np.any(diff(inner) <= 0):
        raise DispersionError("rho > eta fails inside (0, e)")
    if np.any(nu.pdf(outer) - mu.pdf(outer) <= 0):
        raise DispersionError("eta > rho fails on (e, beta)")
    return float(e)
