"""Exception types raised across the package."""


class ShockformError(Exception):
    """Base class for all errors raised by this package."""


class AdmissibilityError(ShockformError):
    """A state left the model's admissible region (e.g. non-positive height)."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class NotHyperbolicError(ShockformError):
    """The coefficient matrix has complex eigenvalues."""


class NotStrictlyHyperbolicError(ShockformError):
    """Eigenvalues are real but not distinct (relative gap below tolerance)."""


class DegenerateCaseError(ShockformError):
    """The cubic coupling constant vanishes; the analysis needs higher order terms."""


class InsufficientDataError(ShockformError):
    """A fit was requested on too few samples or on a non-monotone series."""


class AmbiguousFamilyError(ShockformError):
    """Eigenvector alignment and wave-speed matching picked different families."""

    def __init__(self, message, by_direction, by_speed):
        super().__init__(message)
        self.by_direction = by_direction
        self.by_speed = by_speed


class ConfigError(ShockformError):
    """Invalid, unknown or missing configuration keys."""
