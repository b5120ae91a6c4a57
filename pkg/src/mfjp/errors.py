"""Exception hierarchy.

Every error carries the CLI exit code it maps to:

* 2 -- validation errors (bad model, bad input, unknown label, ...)
* 3 -- numerical failures (non-convergence, unresolved basin, ...)
* 4 -- enumeration / size caps exceeded
"""


class MfjpError(Exception):
    """Base class for all package errors."""

    exit_code = 1


# --------------------------------------------------------------------- 2
class ValidationError(MfjpError, ValueError):
    """Input does not satisfy the documented preconditions."""

    exit_code = 2


class ExprSyntaxError(ValidationError):
    """Rate expression does not conform to the grammar.

    Attributes
    ----------
    position : int
        0-based character offset in the expression text.
    """

    def __init__(self, message, text="", position=0):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position}: {text!r}")


class UnknownLabel(ValidationError):
    """An expression or file references a state label that does not exist."""


class NotIrreducible(ValidationError):
    """The transition digraph is not strongly connected."""


class RateOutOfBounds(ValidationError):
    """A rate is non-finite or non-positive somewhere on the validation grid."""

    def __init__(self, edge, point, value):
        self.edge = edge
        self.point = point
        self.value = value
        super().__init__(
            f"rate of edge {edge[0]}->{edge[1]} is {value!r} at point {list(point)}"
        )


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class NotReversible(ValidationError):
    """Operation requires a reversible (symmetrizable) generator."""


# --------------------------------------------------------------------- 3
class NumericalError(MfjpError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""

    exit_code = 3


class NonConvergent(NumericalError):
    """Iterative solver stopped before convergence."""


class StepRejected(NumericalError):
    """ODE stage left the simplex by more than the tolerance."""


class LimitCycleSuspected(NumericalError):
    """A trajectory did not settle at a fixed point."""


class Unresolved(NumericalError):
    """Basin assignment failed within the time cap."""


class SolveFailed(NumericalError):
    """Linear solve for the invariant measure failed its residual check."""


class Unreachable(NumericalError):
    """No admissible path connects the requested endpoints."""


class AllInfinite(NumericalError):
    """Every W-graph contains an infinite-cost arrow."""


class DisagreementBeyondTolerance(NumericalError):
    """Two independent computations of the same constant disagree."""


class NonTermination(NumericalError):
    """The cycle recursion did not terminate within its level guard."""


class AllCensored(NumericalError):
    """No Monte Carlo replica reached the target before censoring."""


# --------------------------------------------------------------------- 4
class CapExceeded(MfjpError):
    """A size cap (lattice points, graph enumeration, dense solve) was hit."""

    exit_code = 4
