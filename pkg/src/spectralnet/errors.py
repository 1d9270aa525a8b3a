"""Exception hierarchy.

Every error raised deliberately by the package derives from
``SpectralNetError`` so the CLI can turn it into a one-line diagnostic.
"""


class SpectralNetError(Exception):
    pass


class DimensionMismatch(SpectralNetError, ValueError):
    pass


class NotPositiveDefinite(SpectralNetError, ValueError):
    """A Cholesky pivot was too small or non-finite."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class RankDeficientBatch(NotPositiveDefinite):
    """The pre-orthogonalization outputs of a batch do not have full column rank."""

    def __init__(self, message, pivot=None, iteration=None):
        super().__init__(message, pivot)
        self.iteration = iteration


class NoConvergence(SpectralNetError, RuntimeError):
    pass


class TooFewPoints(SpectralNetError, ValueError):
    pass


class DegenerateScale(SpectralNetError, ValueError):
    pass


class ZeroDegree(SpectralNetError, ValueError):
    pass


class NonFiniteLoss(SpectralNetError, FloatingPointError):
    pass


class LengthMismatch(SpectralNetError, ValueError):
    pass


class ConstructionInvariantViolated(SpectralNetError, AssertionError):
    pass


class NoSigmaAchieves(SpectralNetError, RuntimeError):
    pass


class UnknownKind(SpectralNetError, ValueError):
    pass


class ParseError(SpectralNetError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RaggedRows(ParseError):
    pass


class UnknownKey(ParseError):
    pass


class ConfigTypeError(ParseError, TypeError):
    pass
