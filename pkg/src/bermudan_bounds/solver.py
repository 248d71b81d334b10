"""Case classification and the optimal hedge for the symmetric setting.

Given symmetric marginals under the dispersion assumption and symmetric
convex payoffs (a, b) with a >= b >= 0, the cheapest superhedge is generated
by a convex psi* >= b assembled from the maturity-2 payoff, one or two
support lines, and (in the steep-payoff case) a stretch of the maturity-1
payoff itself.  Which assembly applies is decided by the chord through
(x0, a(x0)) and (g_R(x0), b(g_R(x0))):

    C1:  a(0) <= l(0) <= a(x0)   three-piece hedge, stop outside (-x0, x0)
    C2:  l(0) >  a(x0)           flat line l1, stop outside (-x1, x1)
    C3:  l(0) <  a(0)            tangent lines at x3, randomized stopping

plus a simpler C3 variant when a(e) = b(e).  Threshold scalars are solved
against fresh per-point curtain equations, so the dual value carries only
quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .couplings import (CurtainMap, _right_solve_batch, batch_root, find_x0,
                        solve_left_curtain, solve_right_curtain)
from .errors import (AssumptionViolatedError, ConvexOrderError,
                     InvalidPayoffsError, NumericalFailureError)
from .grids import GridFunction
from .measures import Measure, Restriction, check_convex_order, check_dispersion
from .payoffs import Payoff, PayoffPair, normalize_payoffs
from .quadrature import integrate_against, integrate_positive_part


@dataclass
class SolverConfig:
    grid_n: int = 64            # curtain/two-tail map nodes
    hedge_grid_n: int = 2001    # sampling of psi* for the hedge carrier
    tol: float = 1e-8
    trunc_quantile: float = 1e-9


class PiecewiseCurve:
    """Exact piecewise evaluator with known interior breakpoints."""

    def __init__(self, breaks, pieces, kinks=()):
        self.breaks = np.asarray(breaks, float)
        self.pieces = list(pieces)
        if len(self.pieces) != len(self.breaks) + 1:
            raise ValueError("need one piece more than breakpoints")
        self.kinks = sorted(set(map(float, list(self.breaks) + list(kinks))))

    def __call__(self, x):
        x = np.asarray(x, float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x).astype(float)
        idx = np.searchsorted(self.breaks, xv, side="right")
        out = np.empty_like(xv)
        for k, piece in enumerate(self.pieces):
            m = idx == k
            if np.any(m):
                out[m] = piece(xv[m])
        return float(out[0]) if scalar else out.reshape(x.shape)


def _line(slope: float, intercept: float) -> Callable:
    return lambda x: slope * np.asarray(x, float) + intercept


@dataclass
class CaseSolution:
    case_label: str            # C1 | C2 | C3 | C3_tilde | always_stop | always_continue
    thresholds: dict
    psi_star: PiecewiseCurve
    lines: dict
    dual_value: float
    diagnostics: dict = field(default_factory=dict)
    degenerate_root: bool = False


@dataclass
class Instance:
    """A checked dispersion instance with its solved geometry."""

    mu: Measure
    nu: Measure
    pair: PayoffPair
    config: SolverConfig
    e: float
    x0: float | None = None
    g_x0: float | None = None
    right_map: CurtainMap | None = None
    left_map: CurtainMap | None = None

    @property
    def a(self) -> Payoff:
        return self.pair.a

    @property
    def b(self) -> Payoff:
        return self.pair.b

    @property
    def alpha(self) -> float:
        return self.mu.hi

    @property
    def beta(self) -> float:
        return self.nu.hi

    def g_exact(self, x: float) -> float:
        _, g = _right_solve_batch(self.mu, self.nu, self.e, np.asarray([x]))
        return float(g[0])

    def f_exact(self, x: float) -> float:
        f, _ = _right_solve_batch(self.mu, self.nu, self.e, np.asarray([x]))
        return float(f[0])


@dataclass
class BermudanSolution:
    instance: Instance
    case: CaseSolution

    def psi_star_gridfn(self, n: int | None = None) -> GridFunction:
        """Piecewise-linear carrier of psi* including its exact breakpoints.

        The chords of a convex function lie above it, so this carrier is a
        genuine generator (convex, >= b) whose cost dominates the dual value.
        """
        inst = self.instance
        n = n or inst.config.hedge_grid_n
        lo, hi = inst.nu.lo, inst.nu.hi
        grid = np.unique(np.concatenate([
            np.linspace(lo, hi, n),
            [k for k in self.case.psi_star.kinks if lo < k < hi]]))
        return GridFunction(grid, self.case.psi_star(grid))


def _payoff_scale(pair: PayoffPair, beta: float) -> float:
    probe = np.linspace(-beta, beta, 101)
    return 1.0 + float(max(np.max(np.abs(pair.a(probe))), np.max(np.abs(pair.b(probe)))))


def build_instance(mu: Measure, nu: Measure, a: Payoff, b: Payoff,
                   config: SolverConfig | None = None) -> Instance:
    """Validate the inputs and solve the shared geometry (e, x0, curtains)."""
    config = config or SolverConfig()
    order = check_convex_order(mu, nu, config.tol)
    if not order.ordered:
        raise ConvexOrderError(
            f"marginals not in convex order: worst potential gap "
            f"{order.worst_gap:.3e} at k={order.worst_k:.6g}, "
            f"mean gap {order.mean_gap:.3e}")
    if not (mu.symmetric and nu.symmetric):
        raise AssumptionViolatedError("marginals must be symmetric about zero")
    e = check_dispersion(mu, nu)
    beta = nu.hi
    pair = normalize_payoffs(a, b, -1.05 * beta, 1.05 * beta)
    if not (pair.a.is_symmetric(0.0, beta) and pair.b.is_symmetric(0.0, beta)):
        raise AssumptionViolatedError("payoffs must be symmetric about zero")
    probe = np.linspace(-beta, beta, 2001)
    if float(np.min(pair.b(probe))) < -1e-12 * _payoff_scale(pair, beta):
        raise InvalidPayoffsError("maturity-2 payoff must be nonnegative")
    return Instance(mu=mu, nu=nu, pair=pair, config=config, e=e)


def _ensure_geometry(inst: Instance):
    if inst.x0 is None:
        inst.x0 = find_x0(inst.mu, inst.nu, inst.e)
        inst.g_x0 = inst.g_exact(inst.x0)
    if inst.right_map is None:
        inst.right_map = solve_right_curtain(inst.mu, inst.nu, inst.e,
                                             inst.config.grid_n)
        inst.left_map = solve_left_curtain(inst.mu, inst.nu, inst.e,
                                           inst.config.grid_n)


def classify_case(inst: Instance) -> tuple[str, dict]:
    """Branch on l(0) against a(0) and a(x0); ties go to C1."""
    a, b = inst.a, inst.b
    scale = _payoff_scale(inst.pair, inst.beta)
    if b(inst.beta) <= a(0.0) + 1e-12 * scale:
        return "always_stop", {"b_at_beta": b(inst.beta), "a0": a(0.0)}
    probe = np.linspace(-inst.beta, inst.beta, 2001)
    if float(np.max(a(probe) - b(probe))) <= 1e-12 * scale:
        return "always_continue", {}
    _ensure_geometry(inst)
    x0, g0 = inst.x0, inst.g_x0
    slope = (b(g0) - a(x0)) / (g0 - x0)
    l0 = a(x0) - slope * x0
    diag = {"l0": l0, "a0": a(0.0), "a_x0": a(x0), "x0": x0, "g_x0": g0,
            "l_slope": slope}
    if l0 > a(x0):
        return "C2", diag
    if l0 < a(0.0):
        if abs(a(inst.e) - b(inst.e)) <= 1e-10 * scale:
            return "C3_tilde", diag
        return "C3", diag
    return "C1", diag


def _dual_value(inst: Instance, psi: PiecewiseCurve) -> float:
    a, b = inst.a, inst.b
    seeds = list(psi.kinks) + list(a.kinks) + list(b.kinks)
    phi_part = integrate_positive_part(lambda x: a(x) - psi(x), inst.mu, seeds)
    psi_part = integrate_against(psi, inst.nu, seeds)
    return phi_part + psi_part


def _solve_always_stop(inst: Instance, diag: dict) -> CaseSolution:
    b_edge = float(inst.b(inst.beta))
    psi = PiecewiseCurve([], [lambda x, c=b_edge: np.maximum(inst.b(x), c)],
                         kinks=inst.b.kinks)
    dual = _dual_value(inst, psi)
    return CaseSolution("always_stop", {"e": inst.e}, psi,
                        lines={"cap": (0.0, b_edge)}, dual_value=dual,
                        diagnostics=diag)


def _solve_always_continue(inst: Instance, diag: dict) -> CaseSolution:
    psi = PiecewiseCurve([], [inst.b], kinks=inst.b.kinks)
    dual = _dual_value(inst, psi)
    return CaseSolution("always_continue", {"e": inst.e}, psi, lines={},
                        dual_value=dual, diagnostics=diag)


def _solve_c1(inst: Instance, diag: dict) -> CaseSolution:
    a, b = inst.a, inst.b
    x0, g0 = inst.x0, inst.g_x0
    slope = diag["l_slope"]
    l0 = diag["l0"]
    fL0 = -g0  # f_L(-x0) by reflection symmetry
    psi = PiecewiseCurve(
        [fL0, 0.0, g0],
        [b, _line(-slope, l0), _line(slope, l0), b],
        kinks=b.kinks)
    dual = _dual_value(inst, psi)
    thresholds = {"x0": x0, "fL_minus_x0": fL0, "gR_x0": g0, "e": inst.e}
    lines = {"lR": (slope, l0), "lL": (-slope, l0)}
    return CaseSolution("C1", thresholds, psi, lines, dual, diag)


def _make_h(inst: Instance):
    """h = F_+^{-1} o F_- mapping (0, x0] onto [g_R(x0), beta)."""
    mu, nu = inst.mu, inst.nu
    x0, g0 = inst.x0, inst.g_x0
    beta = inst.beta
    F_x0 = mu.cdf(x0)

    def F_minus(x):
        return F_x0 - mu.cdf(x)

    def F_plus(t):
        return (nu.cdf(t) - nu.cdf(g0)) - (mu.cdf(t) - mu.cdf(g0))

    F_plus_max = F_plus(beta)

    def h(x):
        target = F_minus(x)
        if target >= F_plus_max:
            return beta
        lo, hi = g0, beta
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if F_plus(mid) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    return h, F_minus, F_plus


def _solve_c2(inst: Instance, diag: dict) -> CaseSolution:
    a, b = inst.a, inst.b
    x0, g0 = inst.x0, inst.g_x0
    scale = _payoff_scale(inst.pair, inst.beta)
    if not b(g0) < a(x0):
        raise AssumptionViolatedError("C2 requires b(g_R(x0)) < a(x0)")
    h, F_minus, F_plus = _make_h(inst)

    def root_fn(x):
        return b(h(x)) - a(x)

    lo = 1e-9 * x0
    hi = x0 * (1.0 - 1e-12)
    r_lo, r_hi = root_fn(lo), root_fn(hi)
    degenerate = False
    if r_lo <= 0.0:
        if r_lo >= -1e-9 * scale:
            degenerate = True  # b(beta) = a(0): root sits at the boundary
        else:
            raise AssumptionViolatedError(
                "no root for x1: b(h(0+)) < a(0) despite b(beta) >= a(0)")
    if r_hi >= 0.0:
        raise NumericalFailureError("x1 root bracket failed at x0")
    x1 = lo if degenerate else None
    if x1 is None:
        a_, b_ = lo, hi
        for _ in range(100):
            m = 0.5 * (a_ + b_)
            if root_fn(m) > 0:
                a_ = m
            else:
                b_ = m
        x1 = 0.5 * (a_ + b_)
    h1 = h(x1)
    level = a(x1)
    psi = PiecewiseCurve([-h1, h1], [b, lambda x: np.full_like(np.asarray(x, float), level), b],
                         kinks=b.kinks)
    dual = _dual_value(inst, psi)
    thresholds = {"x0": x0, "x1": x1, "h_x1": h1, "gR_x0": g0, "e": inst.e}
    lines = {"l1": (0.0, level)}
    sol = CaseSolution("C2", thresholds, psi, lines, dual, diag)
    sol.degenerate_root = degenerate
    return sol


def _solve_c3(inst: Instance, diag: dict) -> CaseSolution:
    a, b = inst.a, inst.b
    mu, nu, e = inst.mu, inst.nu, inst.e
    x0 = inst.x0

    def g_batch(xs):
        _, g = _right_solve_batch(mu, nu, e, xs)
        return g

    def f_batch(xs):
        f, _ = _right_solve_batch(mu, nu, e, xs)
        return f

    # x2: the chord through (x, a(x)) and (g_R(x), b(g_R(x))) turns horizontal
    lam = lambda xs: b(g_batch(xs)) - a(np.asarray(xs, float))
    x2 = batch_root(lam, x0 * (1 + 1e-9), e * (1 - 1e-9), what="x2 (horizontal chord)")

    # x3: the same chord touches the maturity-1 payoff at f_R(x).  With a
    # flat payoff top, m stays positive and only vanishes at x2 itself, so a
    # near-zero endpoint value short-circuits to x3 = x2.
    def m_batch(xs):
        xs = np.asarray(xs, float)
        f, g = _right_solve_batch(mu, nu, e, xs)
        slope = (b(g) - a(xs)) / (g - xs)
        return a(f) - (a(xs) + slope * (f - xs))

    scale = _payoff_scale(inst.pair, inst.beta)
    m_end = float(m_batch(np.asarray([x2]))[0])
    if m_end >= -1e-9 * scale:
        probe = m_batch(np.linspace(x0 * (1 + 1e-9), x2, 64))
        if np.all(probe >= -1e-9 * scale):
            if m_end > 1e-7 * scale:
                raise NumericalFailureError(
                    f"m has no root on (x0, x2]: m(x2)={m_end:.3e}")
            x3 = x2
        else:
            x3 = batch_root(m_batch, x0 * (1 + 1e-9), x2, what="x3 (tangent chord)")
    else:
        x3 = batch_root(m_batch, x0 * (1 + 1e-9), x2, what="x3 (tangent chord)")
    f3 = inst.f_exact(x3)
    g3 = inst.g_exact(x3)
    slope3 = (b(g3) - a(x3)) / (g3 - x3)
    icpt3 = a(x3) - slope3 * x3

    # x4 balances the inner excess mass against the outer tail
    lhs = (mu.cdf(f3) - mu.cdf(0.0)) - (nu.cdf(f3) - nu.cdf(0.0))

    def w(t):
        return ((nu.total_mass - nu.cdf(t)) - (mu.total_mass - mu.cdf(t))) - lhs

    lo_t, hi_t = g3, inst.beta
    if not (w(lo_t) > 0 >= w(hi_t) or w(lo_t) >= 0 >= w(hi_t)):
        raise NumericalFailureError("x4 bracket failed")
    for _ in range(200):
        mid = 0.5 * (lo_t + hi_t)
        if w(mid) > 0:
            lo_t = mid
        else:
            hi_t = mid
    x4 = 0.5 * (lo_t + hi_t)

    psi = PiecewiseCurve(
        [-g3, -f3, f3, g3],
        [b, _line(-slope3, icpt3), a, _line(slope3, icpt3), b],
        kinks=list(b.kinks) + list(a.kinks))
    dual = _dual_value(inst, psi)
    thresholds = {"x0": x0, "x2": x2, "x3": x3, "x4": x4,
                  "f_x3": f3, "g_x3": g3, "gL_minus_x3": -f3,
                  "fL_minus_x3": -g3, "e": e}
    lines = {"lR3": (slope3, icpt3), "lL3": (-slope3, icpt3)}
    return CaseSolution("C3", thresholds, psi, lines, dual, diag)


def _solve_c3_tilde(inst: Instance, diag: dict) -> CaseSolution:
    a, b, e = inst.a, inst.b, inst.e
    psi = PiecewiseCurve([-e, e], [b, a, b],
                         kinks=list(b.kinks) + list(a.kinks))
    dual = _dual_value(inst, psi)
    thresholds = {"x0": inst.x0, "x3": e, "x4": e, "e": e,
                  "f_x3": e, "g_x3": e}
    return CaseSolution("C3_tilde", thresholds, psi, lines={}, dual_value=dual,
                        diagnostics=diag)


_CASE_SOLVERS = {
    "always_stop": _solve_always_stop,
    "always_continue": _solve_always_continue,
    "C1": _solve_c1,
    "C2": _solve_c2,
    "C3": _solve_c3,
    "C3_tilde": _solve_c3_tilde,
}


def _check_psi_star(inst: Instance, sol: CaseSolution):
    """psi* must be convex, >= b, with (psi* - b) hugging zero in envelope."""
    from .grids import convex_envelope, is_convex

    lo, hi = inst.nu.lo, inst.nu.hi
    grid = np.unique(np.concatenate([
        np.linspace(lo, hi, 2001),
        [k for k in sol.psi_star.kinks if lo < k < hi]]))
    vals = sol.psi_star(grid)
    gf = GridFunction(grid, vals)
    if not is_convex(gf, 1e-10):
        raise NumericalFailureError(f"psi* convexity probe failed in {sol.case_label}")
    bv = inst.b(grid)
    scale = 1.0 + float(np.max(np.abs(bv)))
    if float(np.min(vals - bv)) < -1e-9 * scale:
        raise NumericalFailureError(f"psi* < b in {sol.case_label}")
    resid = convex_envelope(gf.with_values(vals - bv))
    if float(np.max(np.abs(resid.values))) > 1e-9 * scale:
        raise NumericalFailureError(
            f"(psi* - b) has a nontrivial convex envelope in {sol.case_label}")


def solve_bermudan(mu: Measure, nu: Measure, a: Payoff, b: Payoff,
                   config: SolverConfig | None = None) -> BermudanSolution:
    """Full pipeline: validate, classify, construct psi*, price the dual."""
    inst = build_instance(mu, nu, a, b, config)
    label, diag = classify_case(inst)
    if label not in ("always_stop", "always_continue"):
        _ensure_geometry(inst)
    sol = _CASE_SOLVERS[label](inst, diag)
    _check_psi_star(inst, sol)
    lower = max(integrate_against(inst.a, inst.mu, inst.a.kinks),
                integrate_against(inst.b, inst.nu, inst.b.kinks))
    if sol.dual_value < lower - 1e-8:
        raise NumericalFailureError(
            f"dual value {sol.dual_value:.9g} below the pure-strategy bound "
            f"{lower:.9g}")
    sol.diagnostics["pure_strategy_bound"] = lower
    return BermudanSolution(instance=inst, case=sol)


# -- immediate-exercise (time-0 vs time-1) variant --------------------------------


@dataclass
class Time0Solution:
    f: float
    g: float
    slope: float
    value: float
    psi: PiecewiseCurve
    canonical_bound: float     # a(mean) v int b dnu
    short_circuit: str | None = None

    @property
    def improvement(self) -> float:
        return self.value - self.canonical_bound


def solve_time0(nu: Measure, a: Payoff, b: Payoff) -> Time0Solution:
    """Best model price when exercise happens at time 0 or time 1.

    Solves for the interval (f, g) around the mean whose nu-barycentre is the
    mean and whose payoff chord passes through (mean, a(mean)); the optimal
    hedge is psi = max(b, that chord) and the optimal model stops a nu((f,g))
    chunk of mass at time 0 using an exogenous uniform draw.
    """
    if nu.kind != "density":
        raise AssumptionViolatedError("time-0 solver needs a continuous law")
    if not b.is_convex(nu.lo, nu.hi):
        raise InvalidPayoffsError("maturity payoff must be convex")
    nubar = nu.mean
    b_int = integrate_against(b, nu, b.kinks)
    canonical = max(a(nubar), b_int)
    bl, br = nu.lo, nu.hi

    def chord_at_mean(f, g):
        return ((g - nubar) * b(f) + (nubar - f) * b(g)) / (g - f)

    if a(nubar) <= b(nubar):
        psi = PiecewiseCurve([], [b], kinks=b.kinks)
        return Time0Solution(nubar, nubar, 0.0, b_int, psi, canonical,
                             short_circuit="always_continue")
    sup_chord = chord_at_mean(bl, br)
    if a(nubar) >= sup_chord - 1e-12 * (1 + abs(sup_chord)):
        slope = (b(br) - b(bl)) / (br - bl)
        icpt = b(bl) - slope * bl
        psi = PiecewiseCurve([], [lambda x: np.maximum(b(x), slope * np.asarray(x, float) + icpt)],
                             kinks=b.kinks)
        return Time0Solution(bl, br, slope, canonical, psi, canonical,
                             short_circuit="always_stop")

    span = br - bl

    def f_for(g):
        # nu-barycentre of (f, g) equals the mean; the balance integral is
        # increasing in f (lowering f only adds below-mean mass)
        lo, hi = bl, nubar
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            bal = (nu.partial_first_moment(g) - nu.partial_first_moment(mid)) \
                - nubar * (nu.cdf(g) - nu.cdf(mid))
            if bal < 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def resid(g):
        f = f_for(g)
        return chord_at_mean(f, g) - a(nubar), f

    lo_g = nubar + 1e-12 * span
    hi_g = br - 1e-13 * span
    r_lo, _ = resid(lo_g)
    r_hi, _ = resid(hi_g)
    if not (r_lo < 0 < r_hi):
        raise NumericalFailureError("time-0 chord equation failed to bracket")
    for _ in range(100):
        mid = 0.5 * (lo_g + hi_g)
        r, _ = resid(mid)
        if r < 0:
            lo_g = mid
        else:
            hi_g = mid
    g = 0.5 * (lo_g + hi_g)
    f = f_for(g)
    slope = (b(g) - b(f)) / (g - f)
    icpt = a(nubar) - slope * nubar
    psi = PiecewiseCurve([f, g], [b, _line(slope, icpt), b], kinks=b.kinks)
    value = integrate_against(psi, nu, list(b.kinks) + [f, g])
    return Time0Solution(f, g, slope, value, psi, canonical)
