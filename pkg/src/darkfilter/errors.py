"""Exception types shared across the package."""


class DarkfilterError(Exception):
    """Base class for package errors."""


class ValidationError(DarkfilterError):
    """Invalid configuration, parameters, or precondition violation."""


class NumericsError(DarkfilterError):
    """A numerical invariant failed (tolerance exceeded, depleted state, ...)."""
