"""Brute-force verification oracle: discretize the marginals and solve the
randomized-stopping primal as a linear program.

Variables are the two branch couplings pi_stop(i, j) >= 0 and pi_go(i, j)
>= 0.  Rows fix the first marginal, force each branch's conditional
barycentre onto its source atom (so the exercise decision may carry more
information than the price alone), and fix the second marginal:

    sum_j (pi_stop + pi_go)(i, j)        = mu_i
    sum_j (y_j - x_i) pi_stop(i, j)      = 0
    sum_j (y_j - x_i) pi_go(i, j)        = 0
    sum_i (pi_stop + pi_go)(i, j)        = nu_j

maximizing  sum_ij a(x_i) pi_stop(i, j) + b(y_j) pi_go(i, j).

A deterministic variant restricts the stop fraction per atom to {0, 1}
(branch-and-bound over binary indicators), realizing stopping rules that
are measurable in the price alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from .errors import AssumptionViolatedError, NumericalFailureError
from .measures import Measure


@dataclass
class LatticeInstance:
    x: np.ndarray
    w_mu: np.ndarray
    y: np.ndarray
    w_nu: np.ndarray
    a_vals: np.ndarray
    b_vals: np.ndarray

    @property
    def n_mu(self) -> int:
        return len(self.x)

    @property
    def n_nu(self) -> int:
        return len(self.y)


def _bin_measure(m: Measure, n: int, tiny: float = 1e-12):
    """Barycentric binning: cell mass at the cell's conditional mean.

    Near-empty tail cells are merged inward (mass and first moment pooled, so
    the lattice keeps the exact total mass and mean); isolated degenerate
    atoms otherwise trip the LP presolve.
    """
    if m.kind == "atoms":
        return m.atom_locs.copy(), m.atom_weights.copy()
    # uniform cells over the 5e-5..1-5e-5 quantile core; the far tails fold
    # into the outermost barycentric cells (nothing is discarded)
    core_lo = min(m.quantile(5e-5), m.lo + 0.25 * (m.hi - m.lo))
    core_hi = max(m.quantile(1 - 5e-5), m.hi - 0.25 * (m.hi - m.lo))
    edges = np.concatenate([[m.lo], np.linspace(core_lo, core_hi, n - 1),
                            [m.hi]]) if n >= 3 else np.linspace(m.lo, m.hi, n + 1)
    edges = np.unique(edges)
    mass = m.cdf(edges[1:]) - m.cdf(edges[:-1])
    mom = m.partial_first_moment(edges[1:]) - m.partial_first_moment(edges[:-1])
    k = 0
    while k < len(mass) - 1 and mass[k] <= tiny:
        mass[k + 1] += mass[k]
        mom[k + 1] += mom[k]
        mass[k] = mom[k] = 0.0
        k += 1
    k = len(mass) - 1
    while k > 0 and mass[k] <= tiny:
        mass[k - 1] += mass[k]
        mom[k - 1] += mom[k]
        mass[k] = mom[k] = 0.0
        k -= 1
    keep = mass > tiny
    return (mom[keep] / mass[keep]), mass[keep]


def _discrete_potential(nodes, weights, ks):
    return np.sum(weights[None, :] * np.abs(nodes[None, :] - ks[:, None]), axis=1)


def discretize(mu: Measure, nu: Measure, n_mu: int, n_nu: int,
               a=None, b=None) -> LatticeInstance:
    """Moment-matched lattice; refuses if the discrete convex order breaks."""
    if n_mu < 2 or n_nu < 2:
        raise AssumptionViolatedError("need at least two cells per marginal")
    x, w_mu = _bin_measure(mu, n_mu)
    y, w_nu = _bin_measure(nu, n_nu)
    mean_gap = abs(float(np.dot(x, w_mu) / np.sum(w_mu)
                         - np.dot(y, w_nu) / np.sum(w_nu)))
    if mean_gap > 1e-9:
        raise NumericalFailureError(f"discretized means differ by {mean_gap:.3e}")
    ks = np.unique(np.concatenate([x, y]))
    u_mu = _discrete_potential(x, w_mu / np.sum(w_mu), ks)
    u_nu = _discrete_potential(y, w_nu / np.sum(w_nu), ks)
    worst = float(np.max(u_mu - u_nu))
    if worst > 1e-10:
        raise AssumptionViolatedError(
            f"discrete convex order fails by {worst:.3e}; refine the lattice")
    a_vals = np.asarray(a(x), float) if a is not None else np.zeros_like(x)
    b_vals = np.asarray(b(y), float) if b is not None else np.zeros_like(y)
    return LatticeInstance(x, w_mu, y, w_nu, a_vals, b_vals)


def _constraints(inst: LatticeInstance):
    I, J = inst.n_mu, inst.n_nu
    x, y = inst.x, inst.y
    ones_row = sparse.csr_matrix(np.ones((1, J)))
    eye_I = sparse.identity(I, format="csr")
    row_sum = sparse.kron(eye_I, ones_row, format="csr")          # I x IJ
    col_sum = sparse.kron(np.ones((1, I)), sparse.identity(J), format="csr")
    # barycentre rows normalized by their largest coefficient (same
    # constraints, far better scaling for the solver)
    diffs = y[None, :] - x[:, None]
    row_scale = 1.0 / np.maximum(np.max(np.abs(diffs), axis=1), 1.0)
    drift = sparse.csr_matrix(
        ((diffs * row_scale[:, None]).ravel(),
         (np.repeat(np.arange(I), J), np.arange(I * J))),
        shape=(I, I * J))
    zero_I = sparse.csr_matrix((I, I * J))
    A = sparse.vstack([
        sparse.hstack([row_sum, row_sum]),       # first marginal
        sparse.hstack([drift, zero_I]),          # stop-branch barycentre
        sparse.hstack([zero_I, drift]),          # go-branch barycentre
        sparse.hstack([col_sum, col_sum]),       # second marginal
    ], format="csr")
    rhs = np.concatenate([inst.w_mu, np.zeros(2 * I), inst.w_nu])
    return A, rhs


@dataclass
class LPResult:
    value: float
    pi_stop: np.ndarray
    pi_go: np.ndarray
    max_residual: float
    stop_fractions: np.ndarray

    def stop_mass(self) -> float:
        return float(np.sum(self.pi_stop))


def _objective(inst: LatticeInstance) -> np.ndarray:
    I, J = inst.n_mu, inst.n_nu
    return np.concatenate([np.repeat(inst.a_vals, J), np.tile(inst.b_vals, I)])


def solve_primal_lp(inst: LatticeInstance) -> LPResult:
    """Optimal randomized-stopping value on the lattice.

    Interior-point with crossover handles the large, heavily degenerate
    transport polytopes far faster than dual simplex and still lands on a
    basic solution with machine-level residuals; simplex (with and without
    presolve, which misreads near-degenerate tail rows) remains as fallback.
    """
    I, J = inst.n_mu, inst.n_nu
    A, rhs = _constraints(inst)
    c = -_objective(inst)
    opts = {"primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-9}
    attempts = [("highs-ipm", opts),
                ("highs", opts),
                ("highs", {**opts, "presolve": False})]
    res = None
    for method, options in attempts:
        res = optimize.linprog(c, A_eq=A, b_eq=rhs, bounds=(0, None),
                               method=method, options=options)
        if res.success and float(np.max(np.abs(A @ res.x - rhs))) <= 1e-9:
            break
    if res is None or not res.success:
        raise NumericalFailureError(
            f"primal LP failed: {res.message} (status {res.status})")
    z = res.x
    resid = float(np.max(np.abs(A @ z - rhs)))
    if resid > 1e-9:
        raise NumericalFailureError(f"LP constraint residual {resid:.3e}")
    pi_stop = z[:I * J].reshape(I, J)
    pi_go = z[I * J:].reshape(I, J)
    stop_frac = pi_stop.sum(axis=1) / np.maximum(inst.w_mu, 1e-300)
    return LPResult(float(-res.fun), pi_stop, pi_go, resid, stop_frac)


def solve_primal_lp_deterministic(inst: LatticeInstance,
                                  node_limit: int = 30) -> LPResult:
    """All-or-nothing stopping per atom via branch-and-bound enumeration."""
    I, J = inst.n_mu, inst.n_nu
    if I > node_limit:
        raise AssumptionViolatedError(
            f"deterministic enumeration limited to {node_limit} initial atoms")
    A, rhs = _constraints(inst)
    # append binary stop indicators s_i:  sum_j pi_stop(i,.) - mu_i s_i = 0
    link = sparse.csr_matrix(
        (np.ones(I * J), (np.repeat(np.arange(I), J), np.arange(I * J))),
        shape=(I, I * J))
    A_link = sparse.hstack([link, sparse.csr_matrix((I, I * J)),
                            sparse.diags(-inst.w_mu)], format="csr")
    A_full = sparse.vstack([
        sparse.hstack([A, sparse.csr_matrix((A.shape[0], I))]),
        A_link,
    ], format="csr")
    rhs_full = np.concatenate([rhs, np.zeros(I)])
    c = np.concatenate([-_objective(inst), np.zeros(I)])
    integrality = np.concatenate([np.zeros(2 * I * J), np.ones(I)])
    lb = np.zeros(2 * I * J + I)
    ub = np.concatenate([np.full(2 * I * J, np.inf), np.ones(I)])
    milp_opts = {"mip_rel_gap": 1e-9}
    res = optimize.milp(
        c,
        constraints=optimize.LinearConstraint(A_full, rhs_full, rhs_full),
        integrality=integrality,
        bounds=optimize.Bounds(lb, ub),
        options=milp_opts,
    )
    if not res.success:
        # same presolve sensitivity as the pure LP path
        res = optimize.milp(
            c,
            constraints=optimize.LinearConstraint(A_full, rhs_full, rhs_full),
            integrality=integrality,
            bounds=optimize.Bounds(lb, ub),
            options={**milp_opts, "presolve": False},
        )
    if not res.success:
        raise NumericalFailureError(f"deterministic MILP failed: {res.message}")
    z = res.x
    pi_stop = z[:I * J].reshape(I, J)
    pi_go = z[I * J:2 * I * J].reshape(I, J)
    resid = float(np.max(np.abs(A_full @ z - rhs_full)))
    return LPResult(float(-res.fun), pi_stop, pi_go, resid, z[2 * I * J:])


def solve_threshold_deterministic(inst: LatticeInstance) -> LPResult:
    """Best deterministic rule among symmetric threshold stop sets.

    Cross-check for the branch-and-bound variant on symmetric instances:
    enumerates stop sets {|x| >= t} and solves the restricted LP for each.
    """
    I, J = inst.n_mu, inst.n_nu
    A, rhs = _constraints(inst)
    c = -_objective(inst)
    thresholds = np.concatenate([[0.0], np.unique(np.abs(inst.x)),
                                 [np.inf]])
    best = None
    link = sparse.csr_matrix(
        (np.ones(I * J), (np.repeat(np.arange(I), J), np.arange(I * J))),
        shape=(I, I * J))
    A_stop_rows = sparse.hstack([link, sparse.csr_matrix((I, I * J))],
                                format="csr")
    for t in thresholds:
        s = (np.abs(inst.x) >= t).astype(float)
        A_full = sparse.vstack([A, A_stop_rows], format="csr")
        rhs_full = np.concatenate([rhs, inst.w_mu * s])
        res = optimize.linprog(c, A_eq=A_full, b_eq=rhs_full, bounds=(0, None),
                               method="highs")
        if not res.success:
            continue
        if best is None or -res.fun > best[0]:
            best = (-res.fun, res.x, s)
    if best is None:
        raise NumericalFailureError("no feasible threshold stop set")
    val, z, s = best
    return LPResult(float(val), z[:I * J].reshape(I, J),
                    z[I * J:].reshape(I, J), 0.0, s)


def lattice_cost(phi, psi, inst: LatticeInstance) -> float:
    """Hedge cost evaluated with the lattice weights (for weak duality)."""
    return float(np.dot(inst.w_mu, np.asarray(phi(inst.x), float))
                 + np.dot(inst.w_nu, np.asarray(psi(inst.y), float)))
