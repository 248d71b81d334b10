"""Superhedge portfolios: representation, verification, cost, reduction.

A superhedge is a quadruple (phi, psi, theta1, theta2) of grid functions
dominating the two-exercise payoff pathwise:

    a(x) <= phi(x) + psi(y) + theta1(x) (y - x)
    b(y) <= phi(x) + psi(y) + theta2(x) (y - x)

The reduction pipeline (convexify the maturity-2 leg, tighten the
maturity-1 leg, collapse onto a psi-generated hedge) realizes the chain of
cost-reducing rewrites that ends in a hedge generated by a convex psi >= b
with (psi - b) having trivial convex envelope.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import InvalidSpecError, NumericalFailureError
from .grids import GridFunction, convex_envelope, is_convex
from .measures import Measure

DIVERGENCE_GUARD = 1e12


def _as_values(f, grid: np.ndarray) -> np.ndarray:
    """Evaluate a callable or GridFunction on a grid."""
    if isinstance(f, GridFunction):
        return f(grid)
    return np.asarray(f(grid), float)


@dataclass
class Superhedge:
    phi: GridFunction
    psi: GridFunction
    theta1: GridFunction
    theta2: GridFunction
    cost: float | None = None
    verified: bool = False


@dataclass
class VerifyResult:
    ok: bool
    worst_violation: float  # most negative slack seen (0 if none)
    at: tuple[float, float]
    inequality: str  # 'exercise-1' or 'exercise-2'

    def __bool__(self):
        return self.ok


def _subsample(grid: np.ndarray, n: int) -> np.ndarray:
    if len(grid) <= n:
        return grid
    idx = np.unique(np.linspace(0, len(grid) - 1, n).round().astype(int))
    return grid[idx]


def verify_superhedge(s: Superhedge, a, b, slack: float = 1e-8,
                      nx: int = 401, ny: int = 401) -> VerifyResult:
    """Check both dominance inequalities on the grid product."""
    xg = _subsample(s.phi.grid, nx)
    yg = _subsample(s.psi.grid, ny)
    ax = _as_values(a, xg)
    by = _as_values(b, yg)
    phi = s.phi(xg)
    th1 = s.theta1(xg)
    th2 = s.theta2(xg)
    psi = s.psi(yg)
    dy = yg[None, :] - xg[:, None]
    base = phi[:, None] + psi[None, :]
    slack1 = base + th1[:, None] * dy - ax[:, None]
    slack2 = base + th2[:, None] * dy - by[None, :]
    scale = 1.0 + max(float(np.max(np.abs(ax))), float(np.max(np.abs(by))))
    tol = slack * scale
    worst = 0.0
    at = (float(xg[0]), float(yg[0]))
    which = "exercise-1"
    m1 = float(np.min(slack1))
    m2 = float(np.min(slack2))
    if m1 < worst:
        i, j = np.unravel_index(int(np.argmin(slack1)), slack1.shape)
        worst, at, which = m1, (float(xg[i]), float(yg[j])), "exercise-1"
    if m2 < worst:
        i, j = np.unravel_index(int(np.argmin(slack2)), slack2.shape)
        worst, at, which = m2, (float(xg[i]), float(yg[j])), "exercise-2"
    ok = worst >= -tol
    s.verified = bool(ok)
    return VerifyResult(bool(ok), worst, at, which)


def generate_superhedge(psi: GridFunction, a, b, convex_tol: float = 1e-10) -> Superhedge:
    """Build the hedge generated by a convex psi >= b.

    phi = (a - psi)^+, theta1 = -psi' (right slope), theta2 = 0.
    """
    if not is_convex(psi, convex_tol):
        raise InvalidSpecError("generator psi is not convex")
    bv = _as_values(b, psi.grid)
    scale = 1.0 + float(np.max(np.abs(bv)))
    if np.min(psi.values - bv) < -1e-9 * scale:
        raise InvalidSpecError("generator psi falls below the maturity-2 payoff")
    av = _as_values(a, psi.grid)
    phi = psi.with_values(np.maximum(av - psi.values, 0.0))
    theta1 = psi.right_slope().with_values(-psi.right_slope().values)
    theta2 = psi.with_values(np.zeros_like(psi.values))
    s = Superhedge(phi=phi, psi=psi, theta1=theta1, theta2=theta2)
    verify_superhedge(s, a, b)
    return s


# -- hedging cost --------------------------------------------------------------


def _pl_breakpoints(gf: GridFunction, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Knots and values of gf extended linearly onto [lo, hi]."""
    xs = gf.grid
    xs = xs[(xs > lo) & (xs < hi)]
    knots = np.unique(np.concatenate([[lo], xs, [hi]]))
    return knots, gf(knots)


def _signed_pl_integrals(gf: GridFunction, measure: Measure) -> tuple[float, float]:
    """(positive part, negative part) of the integral of a PL function.

    Each linear piece integrates exactly against the cached CDF and partial
    first moment; pieces are split at their zero crossings first.
    """
    knots, vals = _pl_breakpoints(gf, measure.lo, measure.hi)
    cuts = [knots]
    for i in range(len(knots) - 1):
        v0, v1 = vals[i], vals[i + 1]
        if (v0 < 0 < v1) or (v1 < 0 < v0):
            t = v0 / (v0 - v1)
            cuts.append(np.asarray([knots[i] + t * (knots[i + 1] - knots[i])]))
    knots = np.unique(np.concatenate(cuts))
    vals = gf(knots)
    x0, x1 = knots[:-1], knots[1:]
    v0, v1 = vals[:-1], vals[1:]
    slope = (v1 - v0) / (x1 - x0)
    intercept = v0 - slope * x0
    dF = measure.cdf(x1) - measure.cdf(x0)
    dM = measure.partial_first_moment(x1) - measure.partial_first_moment(x0)
    seg = intercept * dF + slope * dM
    mid = 0.5 * (v0 + v1)
    pos = float(np.sum(seg[mid > 0]))
    neg = -float(np.sum(seg[mid < 0]))
    return pos, neg


def _extended_integral(gf: GridFunction, measure: Measure) -> float:
    pos, neg = _signed_pl_integrals(gf, measure)
    if pos > DIVERGENCE_GUARD:
        return math.inf
    if neg > DIVERGENCE_GUARD:
        return -math.inf
    return pos - neg


def hedging_cost(phi: GridFunction, psi: GridFunction,
                 mu: Measure, nu: Measure) -> float:
    """integral of phi dmu + integral of psi dnu in extended reals.

    Uses the convention (-inf) + (+inf) = +inf: a divergent positive part
    on either leg makes the whole cost +inf.
    """
    leg1 = _extended_integral(phi, mu)
    leg2 = _extended_integral(psi, nu)
    if math.isinf(leg1) and leg1 > 0 or math.isinf(leg2) and leg2 > 0:
        return math.inf
    if math.isinf(leg1) or math.isinf(leg2):
        return -math.inf
    return leg1 + leg2


def _with_cost(s: Superhedge, mu, nu) -> Superhedge:
    if mu is not None and nu is not None:
        s.cost = hedging_cost(s.phi, s.psi, mu, nu)
    return s


# -- reduction pipeline ---------------------------------------------------------


def convexify_psi(s: Superhedge, a, b, mu: Measure | None = None,
                  nu: Measure | None = None) -> Superhedge:
    """Replace psi by its convex envelope, keeping phi and both thetas."""
    psi_c = convex_envelope(s.psi)
    out = Superhedge(phi=s.phi, psi=psi_c, theta1=s.theta1, theta2=s.theta2)
    if not verify_superhedge(out, a, b):
        raise NumericalFailureError("convexified portfolio failed re-verification")
    return _with_cost(out, mu, nu)


def tighten_phi(s: Superhedge, a, b, mu: Measure | None = None,
                nu: Measure | None = None) -> Superhedge:
    """Lower phi to (a - psi) v (-(psi - b)^c) and re-derive both thetas."""
    psi = s.psi
    if not is_convex(psi, 1e-8):
        raise InvalidSpecError("tighten_phi needs a convex psi (convexify first)")
    bv = _as_values(b, psi.grid)
    av = _as_values(a, psi.grid)
    h = convex_envelope(psi.with_values(psi.values - bv))
    phi = psi.with_values(np.maximum(av - psi.values, -h.values))
    theta1 = psi.right_slope().with_values(-psi.right_slope().values)
    theta2 = h.right_slope().with_values(-h.right_slope().values)
    out = Superhedge(phi=phi, psi=psi, theta1=theta1, theta2=theta2)
    if not verify_superhedge(out, a, b):
        raise NumericalFailureError("tightened portfolio failed re-verification")
    return _with_cost(out, mu, nu)


def collapse_psi(s: Superhedge, a, b, mu: Measure | None = None,
                 nu: Measure | None = None) -> Superhedge:
    """Collapse onto the hedge generated by psi-hat = psi - (psi - b)^c."""
    psi = s.psi
    bv = _as_values(b, psi.grid)
    g = convex_envelope(psi.with_values(psi.values - bv))
    psi_hat = psi.with_values(psi.values - g.values)
    if not is_convex(psi_hat, 1e-8):
        raise NumericalFailureError("collapsed psi lost convexity (grid too coarse)")
    resid = convex_envelope(psi_hat.with_values(psi_hat.values - bv))
    if float(np.max(np.abs(resid.values))) > 1e-9 * (1.0 + float(np.max(np.abs(bv)))):
        raise NumericalFailureError("(psi-hat - b) kept a nontrivial convex envelope")
    out = generate_superhedge(psi_hat, a, b, convex_tol=1e-8)
    return _with_cost(out, mu, nu)


def reduce_superhedge(s: Superhedge, a, b, mu: Measure | None = None,
                      nu: Measure | None = None) -> list[tuple[str, Superhedge]]:
    """Run the full pipeline; returns the labelled stage trail."""
    trail = [("input", _with_cost(s, mu, nu))]
    trail.append(("convexify", convexify_psi(trail[-1][1], a, b, mu, nu)))
    trail.append(("tighten", tighten_phi(trail[-1][1], a, b, mu, nu)))
    trail.append(("collapse", collapse_psi(trail[-1][1], a, b, mu, nu)))
    return trail


# -- columnar file format --------------------------------------------------------

_HEADER = "grid,phi,psi,theta1,theta2"


def dump_superhedge(s: Superhedge) -> str:
    """Columnar text with float repr so that round-trips are bit-exact."""
    if not (np.array_equal(s.phi.grid, s.psi.grid)
            and np.array_equal(s.phi.grid, s.theta1.grid)
            and np.array_equal(s.phi.grid, s.theta2.grid)):
        raise InvalidSpecError("superhedge files need a single shared grid")
    buf = io.StringIO()
    buf.write(_HEADER + "\n")
    for row in zip(s.phi.grid, s.phi.values, s.psi.values,
                   s.theta1.values, s.theta2.values):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def load_superhedge(text: str) -> Superhedge:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _HEADER:
        raise InvalidSpecError(f"superhedge file must start with '{_HEADER}'")
    rows = [tuple(float(tok) for tok in ln.split(",")) for ln in lines[1:]]
    if any(len(r) != 5 for r in rows):
        raise InvalidSpecError("superhedge rows need exactly five columns")
    cols = list(zip(*rows))
    grid = np.asarray(cols[0])
    return Superhedge(
        phi=GridFunction(grid, np.asarray(cols[1])),
        psi=GridFunction(grid, np.asarray(cols[2])),
        theta1=GridFunction(grid, np.asarray(cols[3])),
        theta2=GridFunction(grid, np.asarray(cols[4])),
    )
