"""Exception types raised across the package."""


class DrBilstmError(Exception):
    """Base class for all package errors."""


class ShapeError(DrBilstmError, ValueError):
    pass


class ContractError(DrBilstmError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(DrBilstmError, ValueError):
    pass


class NumericError(DrBilstmError, ArithmeticError):
    pass


class DegenerateRowError(DrBilstmError, ValueError):
    """A softmax row has no unmasked entry."""


class ParseError(DrBilstmError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(DrBilstmError, ValueError):
    pass


class FormatError(DrBilstmError, ValueError):
    pass


class VersionError(FormatError):
    pass
