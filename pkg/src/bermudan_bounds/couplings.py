"""Extremal martingale coupling maps: right/left curtain and two-tail kernels.

Each map is defined by mass/mean balance equations.  For the right curtain,
node x pairs with (f, g), f < x < g, so that the initial law on (x, g)
carries the same mass and mean as the terminal law on (f, g):

    mu((x, g)) = nu((f, g)),    int_x^g z rho = int_f^g z eta.

Per node we run an outer bisection on g; for each trial g the mass equation
pins f by inverse CDF, and the outer root zeroes the mean residual (which is
strictly decreasing in g beyond the density crossing e).  The two-tail map
(p, q) of the Hobson-Klimmek type solves the analogous cumulative balance

    chi((-inf, x]) = xi_right((q, inf)) + xi_left((p, inf))

together with the matching first-moment identity.  All solves are vectorized
over nodes; between nodes the maps interpolate piecewise-linearly, which
preserves the monotonicity invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidPairError, NumericalFailureError
from .measures import Measure, Restriction

_PAD = 1e-7          # relative padding of node ranges away from domain edges
_BISECT_OUTER = 90
_BISECT_INNER = 80
RESIDUAL_TOL = 1e-8


@dataclass
class TwoPointKernel:
    """One- or two-point transition law at x with barycentre exactly x."""

    x: float
    points: list[tuple[float, float]]  # (location, weight)

    @property
    def mean(self) -> float:
        return sum(w * y for y, w in self.points)

    def expectation(self, fn) -> float:
        return float(sum(w * fn(y) for y, w in self.points))


def _two_point(x: float, lo: float, hi: float) -> TwoPointKernel:
    if hi - lo <= 1e-13 * (1.0 + abs(hi) + abs(lo)):
        return TwoPointKernel(x=x, points=[(x, 1.0)])
    w_hi = (x - lo) / (hi - lo)
    w_lo = (hi - x) / (hi - lo)
    return TwoPointKernel(x=x, points=[(lo, w_lo), (hi, w_hi)])


def _vec_quantile(cdf_fn, targets, lo, hi, iters=_BISECT_INNER):
    lo = np.broadcast_to(np.asarray(lo, float), targets.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, float), targets.shape).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = cdf_fn(mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


@dataclass
class CurtainMap:
    """Boundary functions (f, g) of a curtain coupling on its solved domain."""

    orientation: str  # 'right' or 'left'
    nodes: np.ndarray
    f_vals: np.ndarray
    g_vals: np.ndarray
    domain: tuple[float, float]
    e: float
    mu: Measure
    nu: Measure
    reflection_derived: bool = False

    def f(self, x):
        return np.interp(x, self.nodes, self.f_vals)

    def g(self, x):
        return np.interp(x, self.nodes, self.g_vals)

    def to_csv(self) -> str:
        lines = ["x,f,g"]
        for x, f, g in zip(self.nodes, self.f_vals, self.g_vals):
            lines.append(f"{float(x)!r},{float(f)!r},{float(g)!r}")
        return "\n".join(lines) + "\n"


@dataclass
class HKMap:
    """Decreasing two-tail maps (p, q) transporting chi onto xi."""

    nodes: np.ndarray
    p_vals: np.ndarray
    q_vals: np.ndarray
    chi: Restriction
    xi_left: Restriction
    xi_right: Restriction
    p_monotone: bool = True
    q_monotone: bool = True

    def p(self, x):
        return np.interp(x, self.nodes, self.p_vals)

    def q(self, x):
        return np.interp(x, self.nodes, self.q_vals)

    def contains(self, x: float) -> bool:
        return any(a - 1e-12 <= x <= b + 1e-12 for a, b in self.chi.parts)


# -- right curtain ---------------------------------------------------------------


def _right_inner_f(mu: Measure, nu: Measure, xs, g):
    """f from the right-curtain mass equation nu((f, g)) = mu((x, g))."""
    target = nu.cdf(g) - (mu.cdf(g) - mu.cdf(xs))
    target = np.clip(target, 0.0, None)
    return _vec_quantile(nu.cdf, target, nu.lo, np.minimum(xs, g))


def _right_solve_batch(mu: Measure, nu: Measure, e: float, xs: np.ndarray):
    """Solve the right-curtain equations at each x in xs. Returns (f, g)."""
    beta = nu.hi
    xs = np.asarray(xs, float)
    F_x = mu.cdf(xs)
    M_x = mu.partial_first_moment(xs)

    def inner_f(g):
        return _right_inner_f(mu, nu, xs, g)

    def residual(g):
        f = inner_f(g)
        r = (mu.partial_first_moment(g) - M_x) - \
            (nu.partial_first_moment(g) - nu.partial_first_moment(f))
        return r, f

    # feasibility floor for g: need F_mu(x) + (F_nu - F_mu)(g) >= 0; the CDF
    # difference is increasing on (e, beta), so invert it where necessary
    span = beta - e
    g_lo = np.full(xs.shape, e + 1e-12 * span)
    deficit = nu.cdf(g_lo) - mu.cdf(g_lo) + F_x
    bad = deficit < 0
    if np.any(bad):
        def cdf_diff(g):
            return nu.cdf(g) - mu.cdf(g)
        floor = _vec_quantile(cdf_diff, -F_x[bad], g_lo[bad],
                              np.full(int(np.sum(bad)), beta))
        g_lo[bad] = floor + 1e-11 * span
    g_hi = np.full(xs.shape, beta - 1e-13 * span)

    r_lo, _ = residual(g_lo)
    r_hi, _ = residual(g_hi)
    slack = 1e-10 * (1.0 + abs(beta))
    if np.any(r_lo < -slack) or np.any(r_hi > slack):
        raise NumericalFailureError("right-curtain mean residual failed to bracket")
    lo, hi = g_lo, g_hi
    for _ in range(_BISECT_OUTER):
        mid = 0.5 * (lo + hi)
        r, _ = residual(mid)
        pos = r > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    g = 0.5 * (lo + hi)
    f = inner_f(g)
    return f, g


def solve_right_curtain(mu: Measure, nu: Measure, e: float, n: int = 64) -> CurtainMap:
    """Right-curtain boundary functions on (-alpha, e) at n clustered nodes."""
    if n < 8:
        raise NumericalFailureError("need at least 8 curtain nodes")
    alpha = mu.hi
    lo = -alpha + _PAD * (alpha + e)
    hi = e - _PAD * (alpha + e)
    # cluster nodes toward e, where f and g collapse to the diagonal
    u = np.sin(0.5 * np.pi * np.linspace(0.0, 1.0, n))
    xs = lo + (hi - lo) * u
    _, g = _right_solve_batch(mu, nu, e, xs)
    # near the diagonal collapse the mean residual flattens out and node
    # solves of g are noise-limited; snap g onto a decreasing profile and
    # re-derive f so the mass equation stays exact for the stored pair
    g = np.minimum.accumulate(g)
    f = np.maximum.accumulate(_right_inner_f(mu, nu, xs, g))
    _check_residuals(mu, nu, xs, f, g, orientation="right")
    nodes = np.concatenate([[-alpha], xs, [e]])
    f = np.concatenate([[-nu.hi], f, [e]])
    g = np.concatenate([[nu.hi], g, [e]])
    if np.any(np.diff(f) < -1e-9) or np.any(np.diff(g) > 1e-9):
        raise NumericalFailureError("right-curtain monotonicity violated")
    return CurtainMap("right", nodes, f, g, (-alpha, e), e, mu, nu)


def _check_residuals(mu, nu, xs, f, g, orientation):
    if orientation == "right":
        mass = (mu.cdf(g) - mu.cdf(xs)) - (nu.cdf(g) - nu.cdf(f))
        mean = (mu.partial_first_moment(g) - mu.partial_first_moment(xs)) - \
               (nu.partial_first_moment(g) - nu.partial_first_moment(f))
    else:
        mass = (mu.cdf(xs) - mu.cdf(f)) - (nu.cdf(g) - nu.cdf(f))
        mean = (mu.partial_first_moment(xs) - mu.partial_first_moment(f)) - \
               (nu.partial_first_moment(g) - nu.partial_first_moment(f))
    worst = max(float(np.max(np.abs(mass))), float(np.max(np.abs(mean))))
    if worst > RESIDUAL_TOL:
        raise NumericalFailureError(
            f"{orientation}-curtain residual {worst:.3e} above {RESIDUAL_TOL:g}")


def solve_left_curtain(mu: Measure, nu: Measure, e: float, n: int = 64) -> CurtainMap:
    """Left-curtain map built by reflection: f_L(x) = -g_R(-x), g_L(x) = -f_R(-x)."""
    if not (mu.symmetric and nu.symmetric):
        raise InvalidPairError("reflection construction needs symmetric measures")
    right = solve_right_curtain(mu, nu, e, n)
    nodes = -right.nodes[::-1]
    f = -right.g_vals[::-1]
    g = -right.f_vals[::-1]
    return CurtainMap("left", nodes, f, g, (-e, mu.hi), e, mu, nu,
                      reflection_derived=True)


def _left_inner_g(mu: Measure, nu: Measure, xs, f):
    """g from the left-curtain mass equation nu((f, g)) = mu((f, x))."""
    target = nu.cdf(f) + (mu.cdf(xs) - mu.cdf(f))
    target = np.clip(target, None, nu.total_mass)
    return _vec_quantile(nu.cdf, target, np.maximum(xs, f),
                         np.full(np.shape(xs), nu.hi))


def _left_solve_batch(mu: Measure, nu: Measure, e: float, xs: np.ndarray):
    """Direct left-curtain solve at each x in xs. Returns (f, g)."""
    beta = nu.hi
    xs = np.asarray(xs, float)
    F_x = mu.cdf(xs)
    M_x = mu.partial_first_moment(xs)

    def residual(f):
        g = _left_inner_g(mu, nu, xs, f)
        r = (M_x - mu.partial_first_moment(f)) - \
            (nu.partial_first_moment(g) - nu.partial_first_moment(f))
        return r, g

    span = beta - e
    f_hi = np.full(xs.shape, -e - 1e-12 * span)
    excess = nu.cdf(f_hi) - mu.cdf(f_hi) + F_x - nu.total_mass
    bad = excess > 0
    if np.any(bad):
        def cdf_diff(f):
            return nu.cdf(f) - mu.cdf(f)
        cap = _vec_quantile(cdf_diff, (nu.total_mass - F_x)[bad],
                            np.full(int(np.sum(bad)), -beta), f_hi[bad])
        f_hi[bad] = cap - 1e-11 * span
    f_lo = np.full(xs.shape, -beta + 1e-13 * span)

    r_lo, _ = residual(f_lo)
    r_hi, _ = residual(f_hi)
    slack = 1e-10 * (1.0 + abs(beta))
    if np.any(r_lo < -slack) or np.any(r_hi > slack):
        raise NumericalFailureError("left-curtain mean residual failed to bracket")
    lo_b, hi_b = f_lo, f_hi
    for _ in range(_BISECT_OUTER):
        mid = 0.5 * (lo_b + hi_b)
        r, _ = residual(mid)
        pos = r > 0
        lo_b = np.where(pos, mid, lo_b)
        hi_b = np.where(pos, hi_b, mid)
    f = 0.5 * (lo_b + hi_b)
    g = _left_inner_g(mu, nu, xs, f)
    return f, g


def left_g_exact(mu: Measure, nu: Measure, e: float, x: float) -> float:
    _, g = _left_solve_batch(mu, nu, e, np.asarray([x]))
    return float(g[0])


def solve_left_curtain_direct(mu: Measure, nu: Measure, e: float, n: int = 64) -> CurtainMap:
    """Independent left-curtain solve (test oracle for the reflection)."""
    alpha = mu.hi
    beta = nu.hi
    lo = -e + _PAD * (alpha + e)
    hi = alpha - _PAD * (alpha + e)
    u = np.sin(0.5 * np.pi * np.linspace(0.0, 1.0, n))
    xs = np.sort(hi - (hi - lo) * u)  # cluster toward -e, where the map collapses
    f, _ = _left_solve_batch(mu, nu, e, xs)
    f = np.minimum.accumulate(f)          # decreasing profile, jitter snapped
    g = np.maximum.accumulate(_left_inner_g(mu, nu, xs, f))
    _check_residuals(mu, nu, xs, f, g, orientation="left")
    nodes = np.concatenate([[-e], xs, [alpha]])
    f = np.concatenate([[-e], f, [-beta]])
    g = np.concatenate([[-e], g, [beta]])
    return CurtainMap("left", nodes, f, g, (-e, alpha), e, mu, nu)


# -- two-tail (Hobson-Klimmek style) map -----------------------------------------


def solve_hk(chi: Restriction, xi: Restriction, n: int = 64) -> HKMap:
    """Two-tail map (p, q) for an inner sub-measure chi and outer target xi."""
    if abs(chi.mass - xi.mass) > 1e-9:
        raise InvalidPairError(
            f"chi/xi masses differ: {chi.mass:.12g} vs {xi.mass:.12g}")
    if abs(chi.total_first_moment - xi.total_first_moment) > 1e-9:
        raise InvalidPairError(
            f"chi/xi means differ: {chi.total_first_moment:.12g} "
            f"vs {xi.total_first_moment:.12g}")
    left_parts = [p for p in xi.parts if p[1] <= chi.lo + 1e-12]
    right_parts = [p for p in xi.parts if p[0] >= chi.hi - 1e-12]
    if len(left_parts) + len(right_parts) != len(xi.parts) or \
            not left_parts or not right_parts:
        raise InvalidPairError("xi must live on both sides of chi's support")
    xi_left = Restriction(xi.components, left_parts)
    xi_right = Restriction(xi.components, right_parts)
    if min(chi.min_density_on_probe(), xi_left.min_density_on_probe(),
           xi_right.min_density_on_probe()) < -1e-12:
        raise InvalidPairError("negative density in chi or xi")

    xs = []
    per_part = max(8, n // len(chi.parts))
    for a, b in chi.parts:
        pad = _PAD * (b - a)
        t = 0.5 * (1.0 - np.cos(np.pi * np.linspace(0.0, 1.0, per_part)))
        xs.append(a + pad + (b - a - 2 * pad) * t)
    xs = np.concatenate(xs)

    m = chi.cdf(xs)
    s = chi.first_moment_below(xs)

    def tail_r(q):
        return xi_right.tail_mass(q)

    def inner_p(q):
        # xi_left tail mass must absorb what the right tail does not
        target_left_tail = m - tail_r(q)
        target_cdf = xi_left.mass - target_left_tail
        target_cdf = np.clip(target_cdf, 0.0, xi_left.mass)
        return _vec_quantile(xi_left.cdf, target_cdf, xi_left.lo, xi_left.hi)

    def residual(q):
        p = inner_p(q)
        r = (xi_right.tail_first_moment(q) + xi_left.tail_first_moment(p)) - s
        return r, p

    # bracket q so both tail allocations stay feasible
    q_inner = xi_right.lo
    q_outer = xi_right.hi
    span = q_outer - q_inner

    def neg_tail(q):  # increasing in q
        return -tail_r(q)

    q_lo = _vec_quantile(neg_tail, -np.minimum(m, xi_right.mass * (1 - 1e-15)),
                         np.full(xs.shape, q_inner), np.full(xs.shape, q_outer))
    need_hi = np.clip(m - xi_left.mass, 0.0, None)
    q_hi = _vec_quantile(neg_tail, -need_hi,
                         np.full(xs.shape, q_inner), np.full(xs.shape, q_outer))
    q_lo = q_lo + 1e-13 * span
    q_hi = np.maximum(q_hi - 1e-13 * span, q_lo)

    r_lo, _ = residual(q_lo)
    r_hi, _ = residual(q_hi)
    slack = 1e-9 * (1.0 + abs(q_outer))
    if np.any(r_lo < -slack) or np.any(r_hi > slack):
        raise NumericalFailureError("two-tail mean residual failed to bracket")
    lo_b, hi_b = q_lo, q_hi
    for _ in range(_BISECT_OUTER):
        mid = 0.5 * (lo_b + hi_b)
        r, _ = residual(mid)
        pos = r > 0
        lo_b = np.where(pos, mid, lo_b)
        hi_b = np.where(pos, hi_b, mid)
    q = 0.5 * (lo_b + hi_b)
    p = inner_p(q)

    mass_res = (xi_right.tail_mass(q) + xi_left.tail_mass(p)) - m
    mean_res = (xi_right.tail_first_moment(q) + xi_left.tail_first_moment(p)) - s
    worst = max(float(np.max(np.abs(mass_res))), float(np.max(np.abs(mean_res))))
    if worst > RESIDUAL_TOL:
        raise NumericalFailureError(
            f"two-tail residual {worst:.3e} above {RESIDUAL_TOL:g}")
    return HKMap(nodes=xs, p_vals=p, q_vals=q, chi=chi,
                 xi_left=xi_left, xi_right=xi_right,
                 p_monotone=bool(np.all(np.diff(p) <= 1e-9)),
                 q_monotone=bool(np.all(np.diff(q) <= 1e-9)))


# -- roots and kernels -------------------------------------------------------------


def right_f_exact(mu: Measure, nu: Measure, e: float, x: float) -> float:
    f, _ = _right_solve_batch(mu, nu, e, np.asarray([x]))
    return float(f[0])


def right_g_exact(mu: Measure, nu: Measure, e: float, x: float) -> float:
    _, g = _right_solve_batch(mu, nu, e, np.asarray([x]))
    return float(g[0])


def batch_root(fn_batch, lo: float, hi: float, rounds: int = 7,
               width: int = 48, what: str = "root") -> float:
    """Root of a scalar function whose evaluation is cheapest in batches.

    Each round evaluates the function on a grid spanning the bracket and
    keeps the sub-interval with the sign change, shrinking the bracket by
    the grid factor per round.
    """
    for _ in range(rounds):
        xs = np.linspace(lo, hi, width)
        vals = np.asarray(fn_batch(xs), float)
        signs = np.sign(vals)
        flips = np.where(signs[:-1] * signs[1:] <= 0)[0]
        exact = np.where(vals == 0.0)[0]
        if len(exact):
            return float(xs[exact[0]])
        if len(flips) == 0:
            raise NumericalFailureError(f"no sign change while locating {what}")
        lo, hi = float(xs[flips[0]]), float(xs[flips[0] + 1])
    return 0.5 * (lo + hi)


def find_x0(mu: Measure, nu: Measure, e: float) -> float:
    """The unique root of f_R in (0, e), solved against fresh per-point curtains."""
    lo, hi = 1e-9 * e, e * (1 - 1e-7)

    def f_batch(xs):
        f, _ = _right_solve_batch(mu, nu, e, xs)
        return f

    return batch_root(f_batch, lo, hi, what="x0 (root of f_R)")


def kernel_at(cmap, x: float) -> TwoPointKernel:
    """Transition kernel at x: stays put beyond the crossing, two-point inside."""
    if isinstance(cmap, CurtainMap):
        lo_dom = min(cmap.domain[0], -cmap.mu.hi)
        if not (-cmap.mu.hi - 1e-12 <= x <= cmap.mu.hi + 1e-12):
            raise DomainError(f"x={x} outside the initial law's support")
        if cmap.orientation == "right":
            if x >= cmap.e:
                return TwoPointKernel(x=x, points=[(x, 1.0)])
            return _two_point(x, float(cmap.f(x)), float(cmap.g(x)))
        else:
            if x <= -cmap.e:
                return TwoPointKernel(x=x, points=[(x, 1.0)])
            return _two_point(x, float(cmap.f(x)), float(cmap.g(x)))
    if isinstance(cmap, HKMap):
        if not cmap.contains(x):
            raise DomainError(f"x={x} outside the inner sub-measure's support")
        return _two_point(x, float(cmap.p(x)), float(cmap.q(x)))
    raise DomainError(f"unsupported map type {type(cmap).__name__}")
