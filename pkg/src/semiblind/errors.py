"""Exception hierarchy shared by the package.

Every error carries a short machine-readable ``code`` so that the command
line front end can print ``<code>: <message>`` on a single line.
"""


class SemiBlindError(Exception):
    code = "ERROR"


class InvalidArgumentError(SemiBlindError, ValueError):
    code = "INVALID_ARGUMENT"


class NumericalError(SemiBlindError, ArithmeticError):
    code = "NUMERICAL_ERROR"

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class StaleFilterError(SemiBlindError, RuntimeError):
    code = "STALE_FILTERS"


class DatasetFormatError(SemiBlindError, ValueError):
    code = "FORMAT_ERROR"


class TruncatedPayloadError(DatasetFormatError):
    code = "TRUNCATED_PAYLOAD"


class DimensionMismatchError(DatasetFormatError):
    code = "DIMENSION_MISMATCH"


class ConfigError(SemiBlindError, ValueError):
    code = "CONFIG_ERROR"

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
