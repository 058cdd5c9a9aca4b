"""
Domain errors shared by the KRILC apps.

Library code raises these; the experiment runner catches them per (j, t) and
applies its fallbacks, and the CLI maps them to exit codes.
"""


class KrilcError(Exception):
    """Base class for every error raised by the KRILC library."""


class ParameterDomainError(KrilcError, ValueError):
    """A hyper-parameter lies outside its admissible box."""

    def __init__(self, name, value, bound):
        self.name = name
        self.value = value
        self.bound = bound
        super().__init__(f"{name}={value!r} violates {bound}")


class SingularityError(KrilcError):
    """A linear system that must be solved is numerically singular."""


class IllConditionedError(KrilcError):
    """Least squares problem is rank deficient or has too few rows."""


class OptimizationFailure(KrilcError):
    """No start of a hyper-parameter search produced a finite objective."""


class SequencingError(KrilcError):
    """An input required by the learning loop is not available yet."""


class HorizonIndexError(KrilcError, IndexError):
    """Iteration or time index outside the stored horizon."""


class InstabilityError(KrilcError):
    """A simulated signal or impulse-response sum became non-finite."""

    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message if time is None else f"{message} (t={time})")


class GenerationFailure(KrilcError):
    """Random plant generation hit its resample cap."""

    def __init__(self, failing_filter, attempts):
        self.failing_filter = failing_filter
        self.attempts = attempts
        super().__init__(
            f"no plant accepted after {attempts} draws; last rejection: {failing_filter}"
        )


class UndefinedFitError(KrilcError, ValueError):
    """The normalising spread of a fit is zero."""


class ConfigurationError(KrilcError):
    """Experiment configuration cannot be loaded or validated."""
