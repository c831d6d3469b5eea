"""Exception hierarchy.

The CLI maps ``DataError`` subclasses to exit status 2 and ``NumericError``
subclasses to exit status 3.
"""


class ArssvepError(Exception):
    pass


class DataError(ArssvepError):
    """Bad input data, configuration or file contents."""


class NumericError(ArssvepError, ArithmeticError):
    """A computation produced or met a numerically invalid state."""


class ConfigError(DataError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ParameterError(DataError, ValueError):
    pass


class LengthError(DataError, ValueError):
    pass


class ShapeError(DataError, ValueError):
    pass


class StratificationError(DataError, ValueError):
    pass


class FormatError(DataError):
    """Malformed or truncated binary file."""


class SizeError(DataError, ValueError):
    pass


class DegenerateInputError(NumericError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message)


class TrainingError(NumericError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)


class EstimationError(NumericError):
    pass
