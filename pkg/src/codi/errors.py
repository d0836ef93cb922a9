"""Exception hierarchy shared by the engine.

Grouping matters for the CLI exit-code contract: format problems
(unreadable or truncated tensor files) map to exit 2, validation and
numeric problems to exit 3, and bad parameters to exit 1.
"""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class FormatError(EngineError):
    """An input file is not in its documented format."""


class TensorFormatError(FormatError):
    """The byte stream is not a well-formed tensor file."""


class TensorCorruptionError(TensorFormatError):
    """Header and payload disagree (wrong length, truncation, trailer)."""


class ValidationError(EngineError):
    """Input decodes fine but violates a documented precondition."""


class ShapeError(ValidationError):
    """Array dimensions are inconsistent with each other."""


class ParameterError(EngineError):
    """A configuration value is outside its legal range."""


class InfeasibleMassesError(ValidationError):
    """Transport marginals do not describe a balanced problem."""


class NumericError(EngineError):
    """A computation failed to converge or produced unusable values."""


class DegenerateShapeError(ValidationError):
    """A keypoint configuration has no well-defined alignment."""


class InsufficientKeypointsError(EngineError):
    """A pair of keypoint sets shares too few confident joints.

    Pairwise evaluation treats this as a skip signal rather than a
    failure: the pair is dropped and the averaging divisor adjusted.
    """


class NoValidPairsError(EngineError):
    """Every pair in a set was skipped; no average exists."""
