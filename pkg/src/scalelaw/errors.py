"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: invalid input -> 2,
insufficient data / failed fits -> 3, infeasible targets -> 4.
"""

from __future__ import annotations


class ScalelawError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(ScalelawError):
    """Caller-supplied value violates a precondition."""


class UnknownControlToken(InvalidInput):
    """Language or domain code absent from the token registry."""


class ShardFormatError(ScalelawError):
    """Base class for shard (de)serialization failures."""


class MagicMismatch(ShardFormatError):
    """File does not start with the shard magic bytes."""


class VersionMismatch(ShardFormatError):
    """Shard format version is not supported by this reader."""


class TruncatedShard(ShardFormatError):
    """File ends before the declared payload does."""


class InsufficientData(ScalelawError):
    """Too few observations to attempt the requested fit."""


class FitFailed(ScalelawError):
    """No optimizer start produced a finite objective."""


class InvalidComparison(InvalidInput):
    """Architectures differ in vocab or sequence length; rows not comparable."""


class InfeasibleTarget(ScalelawError):
    """Requested loss lies at or below the fitted asymptotic floor.

    Carries the floor so budget planning can report how close the target is
    rather than just failing.
    """

    def __init__(self, message: str, floor: float):
        super().__init__(message)
        self.floor = floor
