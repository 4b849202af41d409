"""Exception types shared across the package."""


class InputError(ValueError):
    """Caller supplied arguments that violate an operation's preconditions."""


class ModelError(ValueError):
    """A model object is in an invalid state (e.g. a non-PD covariance)."""


class InfeasibleError(RuntimeError):
    """A requested construction or bound has no solution for these parameters."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class MissingArtifactError(FileNotFoundError):
    """A persisted artifact (bundle piece, report) is absent."""
