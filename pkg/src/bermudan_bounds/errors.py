"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: invalid input -> 2,
violated model assumptions -> 3, numerical breakdown -> 4.
"""


class BermudanBoundsError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(BermudanBoundsError):
    """Malformed measure/payoff/scenario descriptor."""


class InvalidPayoffsError(InvalidSpecError):
    """Payoff pair fails the convexity/symmetry requirements."""


class AssumptionViolatedError(BermudanBoundsError):
    """Instance does not satisfy the solver's standing assumptions."""


class ConvexOrderError(AssumptionViolatedError):
    """Marginals are not in convex order."""


class DispersionError(AssumptionViolatedError):
    """Densities do not cross exactly once on each side of the centre."""


class InvalidPairError(BermudanBoundsError):
    """Sub-measure pair handed to the two-tail coupling solver has
    mismatched mass or mean."""


class NumericalFailureError(BermudanBoundsError):
    """Root bracketing / residual tolerance could not be met."""


class DomainError(BermudanBoundsError):
    """Point query outside the domain of a solved map."""
