"""Exception hierarchy shared by all modules."""


class PetrolGameError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(PetrolGameError, ValueError):
    pass


class BracketError(PetrolGameError, ValueError):
    """The supplied interval does not enclose a sign change."""


class AccuracyError(PetrolGameError, RuntimeError):
    """Adaptive refinement failed to reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class ConvergenceError(PetrolGameError, RuntimeError):
    """An iteration exhausted its budget; the last iterate is attached."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class DegenerateModeError(PetrolGameError, ValueError):
    """Operation requires delta > 0 but the population is in the gamma=delta=0 regime."""


class ValidationError(PetrolGameError, ValueError):
    """Input document or data violates a model invariant."""


class FormatError(ValidationError):
    """Malformed file (bad header, unparsable value)."""


class CoverageError(FormatError):
    """Price panel is not rectangular."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)
