"""Exception hierarchy shared across the package.

Every error the library raises deliberately derives from PcdError, so the
CLI and service can map failures to a stable, machine-parsable class name.
"""


class PcdError(Exception):
    """Base class for all deliberate failures in this package."""


# geometry kernels
class InvalidCloud(PcdError):
    """Point buffer is not an (n, 3) array of finite values."""


class DegenerateCloud(PcdError):
    """All points coincide; normalization scale would be zero."""


class BadCount(PcdError):
    """Requested sample/neighbor count is outside [1, cloud size]."""


class EmptyCloud(PcdError):
    """Operation requires at least one point per cloud."""


# tensor engine
class ShapeMismatch(PcdError):
    """Operand shapes are incompatible for the requested operation."""


class DegenerateBatch(PcdError):
    """Batch normalization needs at least 2 rows in training mode."""


class NonScalarLoss(PcdError):
    """backward() requires a scalar loss tensor."""


class NonFiniteValue(PcdError):
    """A NaN or Inf appeared in a tensor operation."""


# network configuration
class LayerCountMismatch(PcdError):
    """Decoder has more layers than the encoder can feed via skips."""


class CountMismatch(PcdError):
    """Assembled cloud sizes violate the configured count invariants."""


class ConfigMismatch(PcdError):
    """Checkpoint and requested configuration disagree."""


# data generation and I/O
class BadSpec(PcdError):
    """Shape specification is invalid (non-positive dims, bad kind...)."""


class EmptyScan(PcdError):
    """Virtual scan produced no visible points (degenerate viewpoint)."""


class InsufficientPoints(PcdError):
    """Partial scan has too few points for the requested sample size."""


class BadMagic(PcdError):
    """Binary cloud file does not start with the expected magic bytes."""


class TruncatedFile(PcdError):
    """Cloud file ends before the declared payload."""


class ParseError(PcdError):
    """ASCII cloud file has a malformed line."""

    def __init__(self, message: str, line: int):
        super().__init__(message)
        self.line = line


# harness
class DatasetMissing(PcdError):
    """Dataset directory or manifest not found."""


class DivergedLoss(PcdError):
    """Training loss became NaN/Inf."""


class TooFewPoints(PcdError):
    """Input cloud is below the completion minimum point count."""
