"""Shared exception types.

Every contract violation raises one of these rather than a bare ValueError,
so callers can tell configuration mistakes apart from numerical breakdowns.
"""


class ContractError(ValueError):
    """An argument violates a documented precondition."""


class DomainError(ContractError):
    """A point lies outside the open set an operation is defined on."""


class MinimumViolationError(ContractError):
    """A sampled point undercuts the value claimed to be the global minimum."""


class CoverageError(RuntimeError):
    """Sampling produced too little data to certify the requested object."""


class NumericError(RuntimeError):
    """A solver failed to reach its accuracy target."""


class StabilizabilityError(NumericError):
    """No stabilizing solution could be computed for the given system."""


class DomainExitError(RuntimeError):
    """A trajectory or iterate left the open domain during evaluation."""
