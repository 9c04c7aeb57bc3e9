"""Exception types shared across the package.

The CLI maps these onto exit codes (see ``srp.cli``).
"""


class SRPError(Exception):
    """Base class for library errors."""


class CapacityError(SRPError):
    """A size cap (vertices, enumeration nodes, DFS budget) was exceeded."""


class InvariantViolation(SRPError):
    """A configuration does not satisfy the invariants of its type."""


class StrategyContractError(SRPError):
    """A sampling strategy returned an illegal keep set."""


class InfeasibleParameters(SRPError):
    """Parameters for which the requested constants do not exist."""


class UnverifiedHypothesis(SRPError):
    """A check was asked to rely on an assumption that has not been certified."""
