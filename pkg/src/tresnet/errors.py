"""Exception hierarchy shared by every module.

CLI exit codes are attached to the base classes: usage problems map to 1,
bad input data to 2, numeric failures to 3.
"""


class TResNetError(Exception):
    exit_code = 1


class UsageError(TResNetError, ValueError):
    """Invalid argument or configuration value."""

    exit_code = 1


class DataError(TResNetError, ValueError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AlignmentError(ParseError):
    pass


class DuplicateError(ParseError):
    pass


class OrderingError(ParseError):
    pass


class BoundsError(DataError, IndexError):
    pass


class InsufficientDataError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class NumericError(TResNetError, ArithmeticError):
    exit_code = 3


class DegenerateScalerError(NumericError):
    pass


class UndefinedCorrelationError(NumericError):
    pass


class BandwidthError(NumericError):
    pass


class UndefinedMetricError(NumericError):
    pass


class DivergenceError(NumericError):
    def __init__(self, message, epoch=None, batch=None, history=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.history = history


class ShapeError(TResNetError, ValueError):
    exit_code = 3


class ArchitectureError(UsageError):
    pass


class StateError(TResNetError, RuntimeError):
    exit_code = 3


class ModelLoadError(DataError):
    pass


class ChecksumError(ModelLoadError):
    pass


class ModelMismatchError(UsageError):
    pass
