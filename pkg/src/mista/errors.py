"""Exception types shared across the package."""

from __future__ import annotations


class MistaError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(MistaError, ValueError):
    """Invalid protocol or run configuration."""


class DomainError(MistaError, ValueError):
    """A formula was evaluated outside the region where it is defined."""


class NoRootError(MistaError):
    """The drift function has no sign change on its domain."""


class SizeError(MistaError):
    """Exact enumeration would exceed the state-count guard."""


class SolverError(MistaError):
    """Stationary solve did not reach the requested residual."""


class NoFeasiblePoint(MistaError):
    """Every optimizer candidate was rejected."""


class AccumulatorOverflowError(MistaError, OverflowError):
    """Age accumulators could overflow 64-bit integers for this run length."""
