"""Piecewise adaptive quadrature against measure densities.

Integrands here are piecewise-smooth (payoffs, hedge legs, their positive
parts); accuracy comes from splitting at every known breakpoint before
handing each smooth piece to the adaptive integrator.
"""

from __future__ import annotations

from bisect import bisect_left
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .measures import Measure

_EPSABS = 1e-11
_EPSREL = 1e-11


def _clean_breaks(lo: float, hi: float, breaks: Iterable[float]) -> np.ndarray:
    pts = [lo, hi]
    for t in breaks:
        if lo < t < hi:
            pts.append(float(t))
    out = np.unique(np.asarray(pts, float))
    return out[np.concatenate([[True], np.diff(out) > 1e-14 * max(1, abs(hi - lo))])]


def integrate_against(fn: Callable, measure: Measure,
                      breaks: Sequence[float] = (),
                      lo: float | None = None, hi: float | None = None) -> float:
    """integral of fn(x) d(measure) over [lo, hi] split at the breakpoints."""
    lo = measure.lo if lo is None else max(lo, measure.lo)
    hi = measure.hi if hi is None else min(hi, measure.hi)
    if hi <= lo:
        return 0.0
    pts = _clean_breaks(lo, hi, breaks)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(lambda z: float(fn(z)) * measure.pdf(z), a, b,
                                epsabs=_EPSABS, epsrel=_EPSREL, limit=200)
        total += val
    return total


def find_sign_crossings(fn: Callable, lo: float, hi: float,
                        seeds: Sequence[float] = (), samples: int = 33) -> list[float]:
    """Sign-change locations of fn on [lo, hi], refined by bisection."""
    pts = _clean_breaks(lo, hi, seeds)
    crossings: list[float] = []
    for a, b in zip(pts[:-1], pts[1:]):
        xs = np.linspace(a, b, samples)
        vals = np.asarray([fn(x) for x in xs], float)
        for i in range(samples - 1):
            v0, v1 = vals[i], vals[i + 1]
            if (v0 < 0 <= v1) or (v1 < 0 <= v0):
                x0, x1 = xs[i], xs[i + 1]
                for _ in range(80):
                    m = 0.5 * (x0 + x1)
                    if (fn(m) < 0) == (v0 < 0):
                        x0 = m
                    else:
                        x1 = m
                crossings.append(0.5 * (x0 + x1))
    return crossings


def integrate_positive_part(fn: Callable, measure: Measure,
                            breaks: Sequence[float] = ()) -> float:
    """integral of fn(x)^+ d(measure), splitting at breakpoints and crossings."""
    lo, hi = measure.lo, measure.hi
    crossings = find_sign_crossings(fn, lo, hi, seeds=breaks)
    pts = _clean_breaks(lo, hi, list(breaks) + crossings)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        mids = np.linspace(a, b, 7)[1:-1]
        if np.median([fn(m) for m in mids]) <= 0.0:
            continue
        val, _ = integrate.quad(lambda z: max(float(fn(z)), 0.0) * measure.pdf(z),
                                a, b, epsabs=_EPSABS, epsrel=_EPSREL, limit=200)
        total += val
    return total
