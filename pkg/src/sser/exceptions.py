"""Exception hierarchy shared by all sser modules."""


class SSERError(Exception):
    """Base class; ``code`` is the machine-parsable tag printed by the CLI."""

    code = "E_SSER"


class ParseError(SSERError):
    code = "E_PARSE"

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(SSERError, ValueError):
    code = "E_VALIDATION"

    def __init__(self, message, index=None):
        if index is not None:
            message = f"record {index}: {message}"
        super().__init__(message)
        self.index = index


class ConfigurationError(SSERError, ValueError):
    code = "E_CONFIG"


class TrainingError(SSERError, ArithmeticError):
    code = "E_TRAINING"

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class AccumulatorOverflowError(SSERError, OverflowError):
    code = "E_OVERFLOW"


class FormatError(ParseError):
    """Bad magic/version in one of the binary container formats."""

    code = "E_FORMAT"
