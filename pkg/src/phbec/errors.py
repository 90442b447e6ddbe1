"""Exception types shared by the solvers."""


class PhbecError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PhbecError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConvergenceError(PhbecError, RuntimeError):
    """An iterative procedure stopped before meeting its tolerance."""

    def __init__(self, message, last_values=None):
        super().__init__(message)
        self.last_values = last_values


class PoleError(PhbecError, ArithmeticError):
    """The scattering length diverges (zero-energy resonance)."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class CollapseError(PhbecError, RuntimeError):
    """The effective potential has no confining well for the condensate."""

    def __init__(self, message, region=None):
        super().__init__(message)
        self.region = region


class ConfigError(PhbecError, ValueError):
    """Invalid or unknown run-configuration entry."""
