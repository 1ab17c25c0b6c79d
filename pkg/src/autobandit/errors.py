"""Exception types shared across the package.

Every error raised on purpose derives from :class:`BanditError` and carries
an ``exit_code`` used by the command line front end.
"""


class BanditError(Exception):
    exit_code = 1


class ConfigError(BanditError, ValueError):
    """Invalid configuration, parameter range or option."""

    exit_code = 2


class DataError(BanditError, ValueError):
    """Data is missing, too small, or otherwise unusable."""

    exit_code = 3


class SchemaError(DataError):
    """A context, row or header does not match the expected schema."""


class ActionError(DataError):
    """Action index outside ``[0, K)``."""


class LengthError(DataError):
    """Two sequences that must align have different lengths."""


class ParseError(DataError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")


class StreamExhausted(DataError):
    """A dataset stream ran out of rows mid-experiment."""


class IoError(BanditError, OSError):
    exit_code = 4
