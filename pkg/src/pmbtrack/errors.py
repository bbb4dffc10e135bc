"""Exception types shared across the toolkit."""


class TrackingError(Exception):
    """Base class for all pmbtrack errors."""


class ContractViolationError(TrackingError, ValueError):
    """An argument or state violates a documented precondition or invariant."""


class NumericalError(TrackingError, ArithmeticError):
    """A linear-algebra operation failed (singular or non-positive-definite matrix)."""


class InfeasibleAssignmentError(TrackingError, ValueError):
    """No feasible assignment exists for the given cost matrix."""
