"""Exception types raised across lowrank_pr.

Every error derives from ``LrprError`` and from the builtin it refines, so code
that already catches ``ValueError`` or ``ArithmeticError`` keeps working.
"""


class LrprError(Exception):
    """Base class for all lowrank_pr errors."""


class DimensionError(LrprError, ValueError):
    """Array shapes or counts are inconsistent with each other."""


class ZeroSignalError(DimensionError):
    """A relative error was requested against an all-zero reference."""


class ConfigurationError(LrprError, ValueError):
    """An ensemble, operator or experiment was configured inconsistently."""


class PartitionError(LrprError, ValueError):
    """A measurement split does not add up to the available rows."""


class ContractViolationError(LrprError, ValueError):
    """An input broke a documented precondition (e.g. orthonormal columns)."""


class NumericalBreakdownError(LrprError, ArithmeticError):
    """Non-finite values appeared inside an iterative solver."""


class RankDeficiencyError(LrprError, ArithmeticError):
    """A least-squares system has no unique solution."""


class NoSignalError(LrprError, ArithmeticError):
    """Rank estimation found no eigenvalue above the signal threshold."""
