"""Error taxonomy shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (counts, spacings, key names)."""


class DomainError(ValueError):
    """Mathematically invalid input (coincident points, empty matrices, ...)."""


class ResonanceError(DomainError):
    """Near-singular multiple-scattering system.

    Carries the condition-number estimate that triggered the rejection.
    """

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate
