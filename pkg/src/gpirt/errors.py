"""Exception and warning types raised across the package."""


class GpirtError(Exception):
    """Base class for errors caused by bad input or degenerate data."""


class InvalidArgumentError(GpirtError, ValueError):
    pass


class NotPositiveDefiniteError(GpirtError, ValueError):
    pass


class ResponseDataError(GpirtError, ValueError):
    pass


class EmptyRespondentError(ResponseDataError):
    def __init__(self, respondent_id):
        super().__init__(f"respondent {respondent_id!r} has no observed responses")
        self.respondent_id = respondent_id


class BadCodeError(ResponseDataError):
    def __init__(self, row, col, value):
        super().__init__(f"invalid response code {value!r} at (row={row}, col={col})")
        self.row = row
        self.col = col
        self.value = value


class DuplicateIdError(ResponseDataError):
    pass


class DegenerateDatasetError(ResponseDataError):
    pass


class InvalidStateError(GpirtError, ValueError):
    pass


class DegeneratePosteriorError(GpirtError, ValueError):
    pass


class DegenerateBeliefError(GpirtError, ValueError):
    pass


class OutOfRangeError(GpirtError, ValueError):
    pass


class UndefinedAUCError(GpirtError, ValueError):
    pass


class DegenerateTestError(GpirtError, ValueError):
    pass


class InfeasibleMaskError(GpirtError, RuntimeError):
    pass


class ChainFormatError(GpirtError, ValueError):
    pass


class ParseError(GpirtError, ValueError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class CatOracleError(GpirtError, RuntimeError):
    """Raised when the responder fails mid-test; carries the partial trace."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class AmbiguousAnchorWarning(UserWarning):
    pass


class SeparationWarning(UserWarning):
    pass
