"""Exception types shared across the package."""


class SaeLstmError(Exception):
    """Base class for every error this package raises on purpose."""


class ShapeError(SaeLstmError):
    """Array dimensions do not match what an operation requires."""


class DomainError(SaeLstmError):
    """A value lies outside the operation's domain (bad index, empty input)."""


class SchemaError(SaeLstmError):
    """Column layout, feature names, or label set do not match the schema."""


class DataError(SaeLstmError):
    """Malformed data content (unparseable cell, unknown label, bad row)."""


class ConfigError(SaeLstmError):
    """Invalid pipeline or training configuration."""


class NumericError(SaeLstmError):
    """Training produced a non-finite loss or weight."""


class FormatError(SaeLstmError):
    """A persisted file is not in a recognized format/version."""


class IntegrityError(SaeLstmError):
    """A persisted file is structurally recognized but truncated or corrupt."""


class ConsistencyError(SaeLstmError):
    """Internal state mismatch, e.g. a backward cache from a different model."""
