"""Exception hierarchy shared by every stage of the pipeline."""


class CausalInsightError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(CausalInsightError, ValueError):
    pass


class InvalidConfigError(CausalInsightError, ValueError):
    pass


class ParseError(CausalInsightError, ValueError):
    """Malformed input file. ``row``/``column`` are 1-based when known."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


class GraphInvariantError(CausalInsightError, ValueError):
    def __init__(self, message, offending=()):
        self.offending = list(offending)
        if self.offending:
            message = f"{message}: {self.offending}"
        super().__init__(message)


class InsufficientDataError(CausalInsightError, ValueError):
    pass


class DivergenceError(CausalInsightError, ArithmeticError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class IntegrationError(CausalInsightError, ArithmeticError):
    pass


class StabilityError(CausalInsightError, ValueError):
    pass


class UnsupportedMetricError(CausalInsightError, ValueError):
    pass


class UndefinedCorrelationError(CausalInsightError, ValueError):
    pass


class ProbeError(CausalInsightError):
    """Predictor failure while probing; ``variable`` is the clamped index."""

    def __init__(self, message, variable):
        super().__init__(f"clamping variable {variable}: {message}")
        self.variable = variable
