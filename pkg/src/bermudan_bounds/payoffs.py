"""Convex payoff families and the max-normalized payoff pair.

Payoffs are carried as exact evaluators plus their kink locations, so the
quadrature layer can split integrals into smooth pieces.  Three families
are accepted (quadratic, piecewise-linear, max-of-lines); everything else
is rejected so convexity stays checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidPayoffsError, InvalidSpecError


class Payoff:
    """Vectorized payoff evaluator with known kinks."""

    def __init__(self, fn: Callable, kinks: Sequence[float] = (),
                 family: dict | None = None):
        self._fn = fn
        self.kinks = sorted(float(k) for k in kinks)
        self.family = dict(family or {})

    def __call__(self, x):
        x = np.asarray(x, float)
        scalar = x.ndim == 0
        flat = np.atleast_1d(x).ravel()
        out = np.asarray(self._fn(flat), float)
        return float(out[0]) if scalar else out.reshape(x.shape)

    def is_convex(self, lo: float = -50.0, hi: float = 50.0, n: int = 4001,
                  tol: float = 1e-9) -> bool:
        xs = np.unique(np.concatenate([np.linspace(lo, hi, n), self.kinks]))
        v = self(xs)
        # non-uniform grid: use chord test instead of raw second differences
        x0, x1, x2 = xs[:-2], xs[1:-1], xs[2:]
        chord = v[:-2] + (v[2:] - v[:-2]) * (x1 - x0) / (x2 - x0)
        scale = 1.0 + float(np.max(np.abs(v)))
        return bool(np.min(chord - v[1:-1]) >= -tol * scale)

    def is_symmetric(self, lo: float = 0.0, hi: float = 50.0, n: int = 2001,
                     tol: float = 1e-9) -> bool:
        xs = np.linspace(lo, hi, n)
        v = self(xs)
        scale = 1.0 + float(np.max(np.abs(v)))
        return bool(np.max(np.abs(self(-xs) - v)) <= tol * scale)


def quadratic(c0: float, c2: float) -> Payoff:
    if c2 < 0:
        raise InvalidPayoffsError("quadratic payoff needs c2 >= 0 for convexity")
    return Payoff(lambda x: c0 + c2 * x * x, kinks=(),
                  family={"family": "quadratic", "c0": float(c0), "c2": float(c2)})


def pwl(breakpoints: Sequence[float], values: Sequence[float]) -> Payoff:
    bp = np.asarray(breakpoints, float)
    vals = np.asarray(values, float)
    if len(bp) < 2 or np.any(np.diff(bp) <= 0):
        raise InvalidSpecError("pwl breakpoints must be strictly increasing")
    if vals.shape != bp.shape:
        raise InvalidSpecError("pwl needs one value per breakpoint")
    slopes = np.diff(vals) / np.diff(bp)
    if np.any(np.diff(slopes) < -1e-12):
        raise InvalidPayoffsError("pwl payoff has decreasing slopes (not convex)")

    def fn(x):
        out = np.interp(x, bp, vals)
        below = x < bp[0]
        above = x > bp[-1]
        out = np.where(below, vals[0] + slopes[0] * (x - bp[0]), out)
        out = np.where(above, vals[-1] + slopes[-1] * (x - bp[-1]), out)
        return out

    return Payoff(fn, kinks=bp,
                  family={"family": "pwl", "breakpoints": list(map(float, bp)),
                          "values": list(map(float, vals))})


def max_of_lines(lines: Sequence[Sequence[float]]) -> Payoff:
    arr = np.asarray(lines, float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise InvalidSpecError("max_of_lines needs a nonempty list of (slope, intercept)")
    slopes = arr[:, 0]
    icpts = arr[:, 1]

    def fn(x):
        return np.max(slopes[None, :] * np.asarray(x, float)[..., None]
                      + icpts[None, :], axis=-1)

    # kinks sit where the active line changes; collect pairwise crossings
    kinks = []
    for i in range(len(slopes)):
        for j in range(i + 1, len(slopes)):
            if slopes[i] != slopes[j]:
                x = (icpts[j] - icpts[i]) / (slopes[i] - slopes[j])
                y = slopes[i] * x + icpts[i]
                if abs(fn(np.asarray([x]))[0] - y) <= 1e-9 * (1 + abs(y)):
                    kinks.append(x)
    return Payoff(fn, kinks=sorted(set(kinks)),
                  family={"family": "max_of_lines",
                          "lines": [[float(s), float(b)] for s, b in arr]})


def payoff_max(p: Payoff, q: Payoff, lo: float = -50.0, hi: float = 50.0) -> Payoff:
    """Pointwise maximum with crossing points added to the kink set."""

    def fn(x):
        return np.maximum(p(x), q(x))

    seeds = np.unique(np.concatenate([
        np.linspace(lo, hi, 4001), np.asarray(p.kinks, float),
        np.asarray(q.kinks, float)]))
    diff = p(seeds) - q(seeds)
    crossings = []
    for i in range(len(seeds) - 1):
        d0, d1 = diff[i], diff[i + 1]
        if d0 == 0.0:
            crossings.append(float(seeds[i]))
        elif (d0 < 0 < d1) or (d1 < 0 < d0):
            a, b = seeds[i], seeds[i + 1]
            for _ in range(80):
                m = 0.5 * (a + b)
                dm = float(p(m) - q(m))
                if (dm < 0) == (d0 < 0):
                    a = m
                else:
                    b = m
            crossings.append(0.5 * (a + b))
    kinks = sorted(set(list(p.kinks) + list(q.kinks) + crossings))
    return Payoff(fn, kinks=kinks, family={"family": "max", "of": [p.family, q.family]})


_PAYOFF_FAMILIES = {
    "quadratic": lambda s: quadratic(s["c0"], s["c2"]),
    "pwl": lambda s: pwl(s["breakpoints"], s["values"]),
    "max_of_lines": lambda s: max_of_lines(s["lines"]),
}


def make_payoff(spec: dict) -> Payoff:
    if not isinstance(spec, dict) or "family" not in spec:
        raise InvalidSpecError("payoff descriptor needs a 'family' key")
    family = spec["family"]
    if family not in _PAYOFF_FAMILIES:
        raise InvalidSpecError(f"unknown payoff family {family!r}")
    try:
        return _PAYOFF_FAMILIES[family](spec)
    except KeyError as exc:
        raise InvalidSpecError(f"payoff family {family!r} missing parameter {exc}") from exc


@dataclass
class PayoffPair:
    """The (a, b) pair after max-normalization a := a v b.

    Keeps the pre-normalization a so reports can state both payoff pairs.
    """

    a: Payoff
    b: Payoff
    a_original: Payoff
    normalized: bool = False

    @property
    def changed(self) -> bool:
        return self.normalized


def normalize_payoffs(a: Payoff, b: Payoff, lo: float = -50.0,
                      hi: float = 50.0) -> PayoffPair:
    """Replace a by a v b; the price and hedging problems are unchanged."""
    if not b.is_convex(lo, hi):
        raise InvalidPayoffsError("maturity-2 payoff must be convex")
    probe = np.linspace(lo, hi, 4001)
    needs_max = bool(np.min(a(probe) - b(probe)) < -1e-12)
    a_norm = payoff_max(a, b, lo, hi) if needs_max else a
    if not a_norm.is_convex(lo, hi):
        raise InvalidPayoffsError("a v b is not convex")
    return PayoffPair(a=a_norm, b=b, a_original=a, normalized=needs_max)
