"""Exception hierarchy shared by all modules."""


class DisPcaError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(DisPcaError, ValueError):
    """An argument is out of range or has an incompatible shape."""


class NumericError(DisPcaError, ArithmeticError):
    """A numeric routine failed to converge.

    Attributes
    ----------
    residual : float
        Relative reconstruction residual at the point of failure (``nan`` if
        the routine produced no factors at all).
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class RankError(DisPcaError, ArithmeticError):
    """A linear system is singular where a unique solution is required."""


class BoostFailure(DisPcaError):
    """No candidate embedding passed the pairwise consistency test."""

    def __init__(self, message, candidates=0):
        super().__init__(message)
        self.candidates = candidates


class DatasetError(DisPcaError, ValueError):
    """A data file could not be parsed.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending input, when known.
    """

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path
