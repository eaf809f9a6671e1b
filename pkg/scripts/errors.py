"""
Exception hierarchy shared by every module of the toolkit.

Integrator trouble (escape, floor, step failure) is never raised: it is recorded
on the returned Trajectory. Everything else that stops a computation derives
from SlowDecayError so the CLI can map it to an exit code.
"""


class SlowDecayError(Exception):
    """Base class for all toolkit errors."""


class InputError(SlowDecayError, ValueError):
    """Bad arguments: dimension mismatch, non-unit vectors, empty catalogs."""


class ConfigError(InputError):
    """Run configuration failed validation."""

    def __init__(self, message, unknown_keys=None):
        super().__init__(message)
        self.unknown_keys = list(unknown_keys or [])


class PreconditionError(InputError):
    """A polynomial has constant, linear or quadratic parts above tolerance."""


class IntegrableFunctionalError(SlowDecayError):
    """The reduced functional vanishes to all fitted orders."""


class SearchFailure(SlowDecayError):
    """No multistart search converged."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateFitError(SlowDecayError):
    """Flat direction: nothing to regress against."""


class ReductionFailure(SlowDecayError):
    """Newton iteration for the implicit function did not converge."""

    def __init__(self, message, usable_radius=None):
        super().__init__(message)
        self.usable_radius = usable_radius


class DegreeTooLowError(SlowDecayError):
    """Polynomial fit of the reduced functional left a large residual."""

    def __init__(self, message, residual=None, suggested_degree=None):
        super().__init__(message)
        self.residual = residual
        self.suggested_degree = suggested_degree


class ConsistencyError(SlowDecayError):
    """Internal consistency check failed (e.g. asymmetric Hessian)."""


class InconclusiveError(SlowDecayError):
    """Not enough data to fit a rate."""


class SpectralIdentityError(SlowDecayError):
    """A phase-space basis identity was violated beyond tolerance."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = failures or []
