"""Exception hierarchy shared by every module."""


class LabelCorrError(Exception):
    """Base class for all package errors."""


class ConfigError(LabelCorrError, ValueError):
    pass


class ShapeError(LabelCorrError, ValueError):
    pass


class DomainError(LabelCorrError, ValueError):
    pass


class NumericError(LabelCorrError, ArithmeticError):
    pass


class CorrectionError(NumericError):
    """Raised when a transition matrix cannot be inverted safely."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class FormatError(LabelCorrError, ValueError):
    """Malformed file. Carries a byte offset (binary) or a line number (text)."""

    def __init__(self, message, offset=None, line=None):
        where = ""
        if offset is not None:
            where = f" (byte offset {offset})"
        elif line is not None:
            where = f" (line {line})"
        super().__init__(message + where)
        self.offset = offset
        self.line = line


class AuditError(LabelCorrError):
    pass


class OracleError(LabelCorrError):
    pass
