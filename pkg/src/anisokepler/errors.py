"""Exception types raised across the package."""


class AnisoKeplerError(Exception):
    """Base class for all package errors."""


class SingularityError(AnisoKeplerError, ValueError):
    """A quantity was requested at the collision singularity x = 0."""


class DomainError(AnisoKeplerError, ValueError):
    """An argument lies outside the domain of an operation."""


class LiftAmbiguityError(AnisoKeplerError):
    """A path segment turns by pi or more, so the angle lift is undefined."""


class FitError(AnisoKeplerError):
    """An asymptotic fit could not be carried out on the supplied data."""


class BracketError(AnisoKeplerError):
    """No bracket of the duration minimum was found."""

    def __init__(self, message, samples=()):
        super().__init__(message)
        self.samples = list(samples)


class ConstraintError(AnisoKeplerError):
    """The winding constraint could not be maintained."""


class ContinuationError(AnisoKeplerError):
    """A continuation in the endpoint radius failed to converge."""

    def __init__(self, message, stages=()):
        super().__init__(message)
        self.stages = list(stages)


class ConfigError(AnisoKeplerError, ValueError):
    """A run configuration is malformed or out of range."""
