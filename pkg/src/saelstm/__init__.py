"""SAE feature extraction + LSTM classification for zero-day threat detection."""

__version__ = "0.1.0"

from . import dataflow, lstm, metrics, numerics, pipeline, sae, synth
from .errors import (
    ConfigError,
    ConsistencyError,
    DataError,
    DomainError,
    FormatError,
    IntegrityError,
    NumericError,
    SaeLstmError,
    SchemaError,
    ShapeError,
)

__all__ = [
    "dataflow",
    "lstm",
    "metrics",
    "numerics",
    "pipeline",
    "sae",
    "synth",
    "SaeLstmError",
    "ShapeError",
    "DomainError",
    "SchemaError",
    "DataError",
    "ConfigError",
    "NumericError",
    "FormatError",
    "IntegrityError",
    "ConsistencyError",
    "__version__",
]
