"""Exception hierarchy shared by the estimators and both pipelines."""


class CCSDError(Exception):
    """Base class for every error raised by this package."""


class InputError(CCSDError, ValueError):
    """Malformed or inconsistent array inputs (shapes, lengths, emptiness)."""


class ParameterError(CCSDError, ValueError):
    """A hyper-parameter is outside its admissible range."""


class DegenerateScaleError(CCSDError, ValueError):
    """A bandwidth heuristic produced a zero scale (constant data)."""


class DegenerateKernelError(CCSDError, ArithmeticError):
    """Kernel weights underflowed; the bandwidth is far too small."""


class NumericalError(CCSDError, ArithmeticError):
    """A matrix expected to be PSD has a significantly negative eigenvalue."""


class InsufficientReferenceError(CCSDError):
    """A mixture has no reference atoms to draw from."""


class InfeasibleBandError(CCSDError, ValueError):
    """The Sakoe-Chiba band cannot reach the end cell of the DTW grid."""


class NoFeasibleBandwidthError(CCSDError):
    """Every grid point was rejected by the effective-rank filter."""


class UndefinedMetricError(CCSDError, ValueError):
    """A ranking metric is undefined for the given labels (e.g. one class)."""


class ParseError(CCSDError, ValueError):
    """A data file could not be parsed."""


class SchemaError(CCSDError, ValueError):
    """A data file is missing a required column."""


class SplitSizeError(CCSDError, ValueError):
    """Too few accounts of some class to build the requested split."""
