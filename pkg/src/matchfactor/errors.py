"""Exception types shared across the package."""


class MatchFactorError(Exception):
    """Base class for all package-specific errors."""


class MalformedRecord(MatchFactorError):
    """An input record could not be parsed or failed validation."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateKey(MatchFactorError):
    """Two records share the same (player_id, match_index) key."""


class NoPlayersRetained(MatchFactorError):
    """Every player was dropped by the completeness filter."""


class DegenerateTensor(MatchFactorError):
    """The input tensor carries no signal (all entries zero)."""


class MaxIterationsExceeded(MatchFactorError):
    """An iterative solver hit its iteration budget before converging."""


class NumericallySingular(MatchFactorError):
    """A linear system was singular even after regularization."""


class EmptyClusterUnrecoverable(MatchFactorError):
    """k-means could not keep every cluster non-empty despite re-seeding."""


class ConstantColumn(MatchFactorError):
    """An operation that needs variation received a constant column."""
