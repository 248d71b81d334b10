"""Piecewise-linear functions sampled on a strictly increasing grid."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DomainError, InvalidSpecError


class GridFunction:
    """A real function carried by samples on a strictly increasing grid.

    Evaluation interpolates linearly between nodes.  Outside the grid the
    function either continues with the end-segment slopes
    (``extrapolation='linear'``) or refuses (``'forbid'``).
    """

    __slots__ = ("grid", "values", "extrapolation")

    def __init__(self, grid, values, extrapolation: str = "linear"):
        grid = np.asarray(grid, float)
        values = np.asarray(values, float)
        if grid.ndim != 1 or len(grid) < 2:
            raise InvalidSpecError("grid needs at least two points")
        if np.any(np.diff(grid) <= 0):
            raise InvalidSpecError("grid must be strictly increasing")
        if values.shape != grid.shape or not np.all(np.isfinite(values)):
            raise InvalidSpecError("values must be finite and match the grid")
        if extrapolation not in ("linear", "forbid"):
            raise InvalidSpecError(f"unknown extrapolation {extrapolation!r}")
        self.grid = grid
        self.values = values
        self.extrapolation = extrapolation

    @classmethod
    def from_callable(cls, fn: Callable, grid, extrapolation: str = "linear"):
        grid = np.asarray(grid, float)
        return cls(grid, np.asarray(fn(grid), float), extrapolation)

    def __call__(self, x):
        x = np.asarray(x, float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x)
        if self.extrapolation == "forbid":
            if np.any(xv < self.grid[0] - 1e-12) or np.any(xv > self.grid[-1] + 1e-12):
                raise DomainError("evaluation outside grid with extrapolation='forbid'")
        out = np.interp(xv, self.grid, self.values)
        g, v = self.grid, self.values
        s0 = (v[1] - v[0]) / (g[1] - g[0])
        s1 = (v[-1] - v[-2]) / (g[-1] - g[-2])
        below = xv < g[0]
        above = xv > g[-1]
        if np.any(below):
            out[below] = v[0] + s0 * (xv[below] - g[0])
        if np.any(above):
            out[above] = v[-1] + s1 * (xv[above] - g[-1])
        return float(out[0]) if scalar else out

    def right_slope(self) -> "GridFunction":
        """Right-derivative at each node (last node keeps the final slope)."""
        slopes = np.diff(self.values) / np.diff(self.grid)
        return GridFunction(self.grid, np.append(slopes, slopes[-1]),
                            self.extrapolation)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values, self.extrapolation)

    def __repr__(self):
        return (f"GridFunction(n={len(self.grid)}, "
                f"span=({self.grid[0]:.6g}, {self.grid[-1]:.6g}))")


def convex_envelope(f: GridFunction) -> GridFunction:
    """Largest convex minorant of the sampled points (lower hull).

    Single monotone-chain pass over the already-sorted nodes; the result is
    re-sampled onto the original grid, so it equals ``f`` at hull vertices
    and lies on hull chords elsewhere.
    """
    g, v = f.grid, f.values
    hull_x: list[float] = []
    hull_y: list[float] = []
    for x, y in zip(g, v):
        while len(hull_x) >= 2:
            x0, y0 = hull_x[-2], hull_y[-2]
            x1, y1 = hull_x[-1], hull_y[-1]
            # pop while the middle point lies on or above the chord
            if (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0) <= 0.0:
                hull_x.pop()
                hull_y.pop()
            else:
                break
        hull_x.append(float(x))
        hull_y.append(float(y))
    env = np.interp(g, np.asarray(hull_x), np.asarray(hull_y))
    return GridFunction(g, np.minimum(env, v), f.extrapolation)


def is_convex(f: GridFunction, tol: float = 1e-10) -> bool:
    """Envelope idempotence probe: f equals its convex envelope within tol."""
    scale = 1.0 + float(np.max(np.abs(f.values)))
    return bool(np.max(np.abs(convex_envelope(f).values - f.values)) <= tol * scale)
