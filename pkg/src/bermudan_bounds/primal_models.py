"""Extremal stop-models: region tables, model value, coupling checks, sampling.

A stop-model pairs each initial point x with a transition kernel (stay put,
curtain two-point, or two-tail two-point) and an exercise time.  The steep-
payoff case additionally randomizes: inside the central interval the mass
stays put and exercises early with probability eta(x)/rho(x), exogenously
drawn, and otherwise jumps to the outer tails and exercises late.

The model value integrates the randomization out analytically.  Continuation
regions transport their initial mass exactly onto a known sub-measure, so
each double integral collapses to a single target-side quadrature; the
kernel-side quadrature is kept as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .couplings import CurtainMap, HKMap, kernel_at, solve_hk
from .errors import NumericalFailureError
from .measures import Measure, Restriction
from .quadrature import integrate_against
from .solver import BermudanSolution, Instance

_Z99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass
class Region:
    label: str
    parts: list[tuple[float, float]]
    kind: str                    # stay | left_curtain | right_curtain | hk | randomized_stay
    stop_time: int               # exercise time off the randomized branch
    cmap: CurtainMap | HKMap | None = None
    jump_map: HKMap | None = None  # randomized_stay: kernel of the non-stay branch

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        hit = np.zeros(x.shape, dtype=bool)
        for a, b in self.parts:
            hit |= (x >= a) & (x < b)
        return hit

    def width(self) -> float:
        return sum(b - a for a, b in self.parts)


@dataclass
class StopModel:
    case_label: str
    regions: list[Region]
    mu: Measure
    nu: Measure
    randomization_required: bool

    def stay_probability(self, x):
        """eta/rho on the randomized region, else 0/1 by exercise rule."""
        x = np.asarray(x, float)
        out = np.zeros(x.shape)
        for r in self.regions:
            m = r.contains(x)
            if r.kind == "randomized_stay":
                out[m] = self.nu.pdf(x[m]) / self.mu.pdf(x[m])
        return out

    def region_table(self) -> list[dict]:
        rows = []
        for r in self.regions:
            rows.append({
                "label": r.label,
                "parts": [[float(a), float(b)] for a, b in r.parts],
                "kind": r.kind,
                "stop_time": r.stop_time,
                "randomized": r.kind == "randomized_stay",
            })
        return rows


def _diff_restriction(nu: Measure, mu: Measure, parts) -> Restriction:
    return Restriction([(1.0, nu), (-1.0, mu)], parts)


def build_model(solution: BermudanSolution, grid_n: int | None = None) -> StopModel:
    """Assemble the case's canonical region table with solved kernels."""
    inst = solution.instance
    sol = solution.case
    mu, nu = inst.mu, inst.nu
    n = grid_n or inst.config.grid_n
    alpha, beta = inst.alpha, inst.beta
    label = sol.case_label
    t = sol.thresholds

    if label in ("always_stop", "always_continue"):
        from .couplings import solve_right_curtain
        cmap = inst.right_map or solve_right_curtain(mu, nu, inst.e, n)
        stop = 1 if label == "always_stop" else 2
        regions = [Region("whole-line", [(-alpha, alpha)], "right_curtain",
                          stop, cmap=cmap)]
        return StopModel(label, regions, mu, nu, randomization_required=False)

    from .couplings import solve_left_curtain, solve_right_curtain
    right = inst.right_map if (grid_n is None and inst.right_map is not None) \
        else solve_right_curtain(mu, nu, inst.e, n)
    left = inst.left_map if (grid_n is None and inst.left_map is not None) \
        else solve_left_curtain(mu, nu, inst.e, n)

    if label == "C1":
        x0, g0 = t["x0"], t["gR_x0"]
        chi = mu.restricted([(-x0, x0)])
        xi = _diff_restriction(nu, mu, [(-beta, -g0), (g0, beta)])
        hk = solve_hk(chi, xi, n)
        regions = [
            Region("left-wing", [(-alpha, -x0)], "left_curtain", 1, cmap=left),
            Region("right-wing", [(x0, alpha)], "right_curtain", 1, cmap=right),
            Region("centre", [(-x0, x0)], "hk", 2, cmap=hk),
        ]
        return StopModel(label, regions, mu, nu, randomization_required=False)

    if label == "C2":
        x0, x1, h1, g0 = t["x0"], t["x1"], t["h_x1"], t["gR_x0"]
        chi0 = mu.restricted([(-x0, -x1), (x1, x0)])
        xi0 = _diff_restriction(nu, mu, [(-h1, -g0), (g0, h1)])
        chi1 = mu.restricted([(-x1, x1)])
        xi1 = _diff_restriction(nu, mu, [(-beta, -h1), (h1, beta)])
        regions = [
            Region("left-wing", [(-alpha, -x0)], "left_curtain", 1, cmap=left),
            Region("right-wing", [(x0, alpha)], "right_curtain", 1, cmap=right),
            Region("annulus", [(-x0, -x1), (x1, x0)], "hk", 1,
                   cmap=solve_hk(chi0, xi0, n)),
            Region("centre", [(-x1, x1)], "hk", 2, cmap=solve_hk(chi1, xi1, n)),
        ]
        return StopModel(label, regions, mu, nu, randomization_required=False)

    if label == "C3":
        x3, f3, g3, x4 = t["x3"], t["f_x3"], t["g_x3"], t["x4"]
        chi3 = mu.restricted([(-x3, -f3), (f3, x3)])
        xi3 = _diff_restriction(nu, mu, [(-x4, -g3), (g3, x4)])
        chi4 = Restriction([(1.0, mu), (-1.0, nu)], [(-f3, f3)])
        xi4 = _diff_restriction(nu, mu, [(-beta, -x4), (x4, beta)])
        regions = [
            Region("left-wing", [(-alpha, -x3)], "left_curtain", 1, cmap=left),
            Region("right-wing", [(x3, alpha)], "right_curtain", 1, cmap=right),
            Region("annulus", [(-x3, -f3), (f3, x3)], "hk", 2,
                   cmap=solve_hk(chi3, xi3, n)),
            Region("centre", [(-f3, f3)], "randomized_stay", 1,
                   jump_map=solve_hk(chi4, xi4, n)),
        ]
        return StopModel(label, regions, mu, nu, randomization_required=True)

    if label == "C3_tilde":
        e = t["e"]
        chi_t = Restriction([(1.0, mu), (-1.0, nu)], [(-e, e)])
        xi_t = _diff_restriction(nu, mu, [(-beta, -e), (e, beta)])
        regions = [
            Region("left-wing", [(-alpha, -e)], "stay", 1),
            Region("right-wing", [(e, alpha)], "stay", 1),
            Region("centre", [(-e, e)], "randomized_stay", 1,
                   jump_map=solve_hk(chi_t, xi_t, n)),
        ]
        return StopModel(label, regions, mu, nu, randomization_required=True)

    raise NumericalFailureError(f"no model construction for case {label}")


# -- model value -------------------------------------------------------------------


def _integrate_restriction(fn: Callable, restr: Restriction,
                           breaks=()) -> float:
    total = 0.0
    for a_, b_ in restr.parts:
        pts = np.unique(np.concatenate(
            [[a_, b_], [t for t in breaks if a_ < t < b_]]))
        for lo, hi in zip(pts[:-1], pts[1:]):
            val, _ = integrate.quad(
                lambda z: float(fn(z)) * float(restr.density(np.asarray(z))),
                lo, hi, epsabs=1e-11, epsrel=1e-11, limit=200)
            total += val
    return total


def _curtain_targets(cmap: CurtainMap, xs: np.ndarray):
    """Vectorized kernel points/weights for a curtain map (stay beyond e)."""
    lo = cmap.f(xs)
    hi = cmap.g(xs)
    if cmap.orientation == "right":
        stay = xs >= cmap.e
    else:
        stay = xs <= -cmap.e
    lo = np.where(stay, xs, lo)
    hi = np.where(stay, xs, hi)
    den = np.where(stay, 1.0, hi - lo)
    tiny = den <= 1e-13
    w_hi = np.where(stay | tiny, np.where(stay, 0.0, 0.5), (xs - lo) / den)
    w_lo = 1.0 - w_hi
    return lo, hi, w_lo, w_hi


def _hk_targets(hmap: HKMap, xs: np.ndarray):
    lo = hmap.p(xs)
    hi = hmap.q(xs)
    den = hi - lo
    w_hi = (xs - lo) / den
    return lo, hi, 1.0 - w_hi, w_hi


def _region_targets(r: Region, xs: np.ndarray):
    if r.kind == "stay":
        return xs, xs, np.ones_like(xs), np.zeros_like(xs)
    if r.kind in ("left_curtain", "right_curtain"):
        return _curtain_targets(r.cmap, xs)
    if r.kind == "hk":
        return _hk_targets(r.cmap, xs)
    raise NumericalFailureError(f"no pointwise kernel for region kind {r.kind}")


def primal_value(model: StopModel, a, b, method: str = "exact") -> float:
    """Expected payoff of the model under its exercise rule.

    method='exact' integrates each region against its exact pushforward
    (the randomization integrates out to a target-side integral); 'kernel'
    re-derives continuation values pointwise from the solved maps on a fine
    midpoint grid, as an independent cross-check.
    """
    mu, nu = model.mu, model.nu
    total = 0.0
    for r in model.regions:
        if r.kind == "randomized_stay":
            # stay branch: a(x) rho (eta/rho) = a eta on the region
            for lo, hi in r.parts:
                total += integrate_against(a, nu, getattr(a, "kinks", ()), lo, hi)
            if method == "exact":
                xi = Restriction(r.jump_map.xi_left.components,
                                 r.jump_map.xi_left.parts + r.jump_map.xi_right.parts)
                total += _integrate_restriction(b, xi, getattr(b, "kinks", ()))
            else:
                total += _kernel_branch_value(r, b, model, jump_only=True)
            continue
        if r.stop_time == 1:
            for lo, hi in r.parts:
                total += integrate_against(a, mu, getattr(a, "kinks", ()), lo, hi)
            continue
        # continuation region
        if method == "exact":
            if r.kind == "hk":
                xi = Restriction(r.cmap.xi_left.components,
                                 r.cmap.xi_left.parts + r.cmap.xi_right.parts)
                total += _integrate_restriction(b, xi, getattr(b, "kinks", ()))
            elif r.kind in ("right_curtain", "left_curtain") and \
                    r.width() >= (model.mu.hi - model.mu.lo) * (1 - 1e-9):
                # the full-line curtain transports mu onto nu exactly
                total += integrate_against(b, nu, getattr(b, "kinks", ()))
            else:
                total += _kernel_branch_value(r, b, model)
        else:
            total += _kernel_branch_value(r, b, model)
    return total


def _kernel_branch_value(r: Region, b, model: StopModel,
                         jump_only: bool = False, n_mid: int = 200_000) -> float:
    """Continuation value by midpoint quadrature over the region's kernels."""
    total = 0.0
    for lo, hi in r.parts:
        n = max(2000, int(n_mid * (hi - lo) / (model.mu.hi - model.mu.lo)))
        xs = np.linspace(lo, hi, n + 1)
        xs = 0.5 * (xs[1:] + xs[:-1])
        w = (hi - lo) / n
        if jump_only:
            dens = model.mu.pdf(xs) - model.nu.pdf(xs)  # 1 - eta/rho times rho
            t_lo, t_hi, w_lo, w_hi = _hk_targets(r.jump_map, xs)
        else:
            dens = model.mu.pdf(xs)
            t_lo, t_hi, w_lo, w_hi = _region_targets(r, xs)
        vals = w_lo * np.asarray(b(t_lo)) + w_hi * np.asarray(b(t_hi))
        total += float(np.sum(vals * dens) * w)
    return total


# -- coupling validation -------------------------------------------------------------


@dataclass
class RegionReport:
    label: str
    kind: str
    mass_in: float
    mass_out: float
    max_mean_residual: float


@dataclass
class CouplingReport:
    n_bins: int
    cdf_sup_error: float
    max_mean_residual: float
    regions: list[RegionReport]
    mass_total: float

    @property
    def ok(self) -> bool:
        return self.cdf_sup_error <= 1e-4


def check_coupling(model: StopModel, n_bins: int = 512,
                   oversample: int = 48) -> CouplingReport:
    """Push the initial law through the kernels and compare the second marginal.

    The pushforward is accumulated into an n_bins histogram (two-point Gauss
    cells aligned with the bins); cumulative masses at the bin edges are then
    compared with the exact target CDF.  The caller should build the model
    with map resolution commensurate with n_bins for refinement studies.
    """
    mu, nu = model.mu, model.nu
    edges = np.linspace(nu.lo, nu.hi, n_bins + 1)
    bin_w = edges[1] - edges[0]
    hist = np.zeros(n_bins)
    gl_off = 0.5 / math.sqrt(3.0)
    reports = []

    def deposit(points, masses):
        idx = np.clip(np.searchsorted(edges, points, side="right") - 1,
                      0, n_bins - 1)
        np.add.at(hist, idx, masses)

    for r in model.regions:
        mass_in = 0.0
        mass_out = 0.0
        worst_mean = 0.0
        for lo, hi in r.parts:
            n_cells = max(8, int(math.ceil((hi - lo) / bin_w)) * oversample)
            cell_edges = np.linspace(lo, hi, n_cells + 1)
            mid = 0.5 * (cell_edges[1:] + cell_edges[:-1])
            half = 0.5 * (cell_edges[1:] - cell_edges[:-1])
            xs = np.concatenate([mid - half * 2 * gl_off, mid + half * 2 * gl_off])
            wq = np.concatenate([half, half])
            rho = mu.pdf(xs)
            mass_in += float(np.sum(rho * wq))
            if r.kind == "randomized_stay":
                eta = nu.pdf(xs)
                stay_mass = eta * wq
                deposit(xs, stay_mass)
                t_lo, t_hi, w_lo, w_hi = _hk_targets(r.jump_map, xs)
                jump_mass = (rho - eta) * wq
                deposit(t_lo, w_lo * jump_mass)
                deposit(t_hi, w_hi * jump_mass)
                mean_res = np.abs(w_lo * t_lo + w_hi * t_hi - xs)
                worst_mean = max(worst_mean, float(np.max(mean_res)))
                mass_out += float(np.sum(stay_mass) + np.sum(jump_mass))
            else:
                t_lo, t_hi, w_lo, w_hi = _region_targets(r, xs)
                deposit(t_lo, w_lo * rho * wq)
                deposit(t_hi, w_hi * rho * wq)
                mean_res = np.abs(w_lo * t_lo + w_hi * t_hi - xs)
                worst_mean = max(worst_mean, float(np.max(mean_res)))
                mass_out += float(np.sum(rho * wq))
        reports.append(RegionReport(r.label, r.kind, mass_in, mass_out,
                                    worst_mean))
    pushed_cdf = np.concatenate([[0.0], np.cumsum(hist)])
    target_cdf = nu.cdf(edges) - nu.cdf(edges[0])
    sup_err = float(np.max(np.abs(pushed_cdf - target_cdf)))
    return CouplingReport(n_bins=n_bins, cdf_sup_error=sup_err,
                          max_mean_residual=max(r.max_mean_residual for r in reports),
                          regions=reports, mass_total=float(pushed_cdf[-1]))


# -- canonical-filtration (deterministic stop) comparison ------------------------------


def canonical_value(model: StopModel, a, b, n_mid: int = 100_000) -> float:
    """Best value with stopping measurable in the price alone.

    Keeps the model's kernels but replaces the exercise rule by the pointwise
    best of stopping (a(x)) and continuing (the kernel's expected b), which is
    the optimum over deterministic rules for this coupling.
    """
    mu, nu = model.mu, model.nu
    total = 0.0
    for r in model.regions:
        for lo, hi in r.parts:
            n = max(2000, int(n_mid * (hi - lo) / (mu.hi - mu.lo)))
            xs = np.linspace(lo, hi, n + 1)
            xs = 0.5 * (xs[1:] + xs[:-1])
            w = (hi - lo) / n
            rho = mu.pdf(xs)
            av = np.asarray(a(xs))
            if r.kind == "randomized_stay":
                eta = nu.pdf(xs)
                p_stay = np.clip(eta / rho, 0.0, 1.0)
                t_lo, t_hi, w_lo, w_hi = _hk_targets(r.jump_map, xs)
                cont = p_stay * np.asarray(b(xs)) + (1 - p_stay) * (
                    w_lo * np.asarray(b(t_lo)) + w_hi * np.asarray(b(t_hi)))
            else:
                t_lo, t_hi, w_lo, w_hi = _region_targets(r, xs)
                cont = w_lo * np.asarray(b(t_lo)) + w_hi * np.asarray(b(t_hi))
            total += float(np.sum(np.maximum(av, cont) * rho) * w)
    return total


# -- Monte Carlo ------------------------------------------------------------------------


@dataclass
class SampleEstimate:
    mean: float
    ci_low: float
    ci_high: float
    n: int
    stderr: float

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def sample_paths(model: StopModel, n: int, seed: int, a, b,
                 chunk: int = 262_144, return_paths: bool = False):
    """Monte Carlo estimate of the model value with a 99% normal CI.

    Deterministic per seed: the draw stream splits into fixed-size chunks
    with independent substreams, merged in chunk order.
    """
    if n < 1:
        raise NumericalFailureError("need at least one path")
    mu, nu = model.mu, model.nu
    acc_sum = 0.0
    acc_sq = 0.0
    paths = [] if return_paths else None
    seeds = np.random.SeedSequence(seed).spawn(max(1, (n + chunk - 1) // chunk))
    remaining = n
    for k, ss in enumerate(seeds):
        m = min(chunk, remaining)
        remaining -= m
        rng = np.random.default_rng(ss)
        x = mu.quantile(rng.uniform(size=m))
        u = rng.uniform(size=m)
        v = rng.uniform(size=m)
        payoff = np.zeros(m)
        tau = np.zeros(m, dtype=int)
        y = x.copy()
        assigned = np.zeros(m, dtype=bool)
        for r in model.regions:
            sel = r.contains(x) & ~assigned
            if not np.any(sel):
                continue
            assigned |= sel
            xs = x[sel]
            if r.kind == "randomized_stay":
                eta = nu.pdf(xs)
                rho = mu.pdf(xs)
                stay = u[sel] <= eta / rho
                t_lo, t_hi, w_lo, w_hi = _hk_targets(r.jump_map, xs)
                ys = np.where(v[sel] < w_hi, t_hi, t_lo)
                ys = np.where(stay, xs, ys)
                y[sel] = ys
                tau[sel] = np.where(stay, 1, 2)
                payoff[sel] = np.where(stay, np.asarray(a(xs)), np.asarray(b(ys)))
            else:
                t_lo, t_hi, w_lo, w_hi = _region_targets(r, xs)
                ys = np.where(v[sel] < w_hi, t_hi, t_lo)
                y[sel] = ys
                tau[sel] = r.stop_time
                payoff[sel] = np.asarray(a(xs)) if r.stop_time == 1 \
                    else np.asarray(b(ys))
        if not np.all(assigned):
            # points on region boundaries (measure zero): treat as stop
            miss = ~assigned
            payoff[miss] = np.asarray(a(x[miss]))
            tau[miss] = 1
        acc_sum += float(np.sum(payoff))
        acc_sq += float(np.sum(payoff ** 2))
        if return_paths:
            paths.append(np.column_stack([x, u, y, tau]))
    mean = acc_sum / n
    var = max(acc_sq / n - mean ** 2, 0.0)
    stderr = math.sqrt(var / n)
    est = SampleEstimate(mean, mean - _Z99 * stderr, mean + _Z99 * stderr, n, stderr)
    if return_paths:
        return est, np.concatenate(paths, axis=0)
    return est
