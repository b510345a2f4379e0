"""Exception hierarchy shared by the library and the CLI."""


class BetaShapError(Exception):
    """Base class for all errors raised by betashap."""


class InvalidParameterError(BetaShapError, ValueError):
    pass


class AdmissibilityError(BetaShapError, ValueError):
    """Normalized weights do not sum to n."""


class SizeLimitError(BetaShapError, ValueError):
    """Exact enumeration requested on too many points."""


class IncompatibleMetricError(BetaShapError, ValueError):
    """Metric does not match the label type of the data."""


class InsufficientDataError(BetaShapError, ValueError):
    pass


class ParseError(BetaShapError, ValueError):
    """Malformed input file. Carries the offending row and column when known."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaMismatchError(BetaShapError, ValueError):
    pass
