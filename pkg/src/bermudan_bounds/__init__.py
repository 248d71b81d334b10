"""Model-independent price bounds for two-exercise Bermudan options."""

__version__ = "0.1.0"

from .errors import (AssumptionViolatedError, BermudanBoundsError,
                     ConvexOrderError, DispersionError, DomainError,
                     InvalidPairError, InvalidPayoffsError, InvalidSpecError,
                     NumericalFailureError)
from .grids import GridFunction, convex_envelope
from .measures import (Measure, Restriction, atoms, check_convex_order,
                       check_dispersion, gaussian, make_measure, table,
                       triangle, uniform)
from .payoffs import (Payoff, PayoffPair, make_payoff, max_of_lines,
                      normalize_payoffs, pwl, quadratic)
from .solver import (BermudanSolution, CaseSolution, SolverConfig,
                     classify_case, solve_bermudan, solve_time0)

__all__ = [
    "AssumptionViolatedError", "BermudanBoundsError", "BermudanSolution",
    "CaseSolution", "ConvexOrderError", "DispersionError", "DomainError",
    "GridFunction", "InvalidPairError", "InvalidPayoffsError",
    "InvalidSpecError", "Measure", "NumericalFailureError", "Payoff",
    "PayoffPair", "Restriction", "SolverConfig", "atoms",
    "check_convex_order", "check_dispersion", "classify_case",
    "convex_envelope", "gaussian", "make_measure", "make_payoff",
    "max_of_lines", "normalize_payoffs", "pwl", "quadratic",
    "solve_bermudan", "solve_time0", "table", "triangle", "uniform",
]
