"""Shared exception types."""


class DomainError(ValueError):
    """Inputs outside a function's or model's admissible domain."""


class NumericalError(RuntimeError):
    """A numerical procedure produced an invalid result (NaN, overflow,
    out-of-band probability, negative price beyond roundoff)."""


class ConvergenceError(NumericalError):
    """An iterative procedure hit its budget without meeting tolerance."""
