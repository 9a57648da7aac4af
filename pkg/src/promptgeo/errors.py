"""Typed exceptions shared across the package.

Every error raised on purpose by this package derives from PromptGeoError,
so callers (and the CLI exit-code mapping) can distinguish engine failures
from programming errors.
"""


class PromptGeoError(Exception):
    """Base class for all package-specific errors."""


class IoError(PromptGeoError):
    """Filesystem failure while reading or writing an artifact."""


class FormatError(PromptGeoError):
    """Byte stream does not parse as the declared container format."""


class SchemaError(PromptGeoError):
    """Structurally parseable, but header/payload shapes are inconsistent."""


class DataError(PromptGeoError):
    """Payload values violate data invariants (non-finite, zero norm, bad label)."""


class ConfigError(PromptGeoError):
    """Invalid or inconsistent configuration value."""


class SingularGramError(PromptGeoError):
    """Prompt Gram matrix is singular at epsilon = 0."""


class ZeroFeatureError(PromptGeoError):
    """A feature vector has zero norm where a direction is required."""


class DegenerateTextFeatureError(PromptGeoError):
    """A text feature collapsed to zero norm inside the encoder."""


class EmptyBatchError(PromptGeoError):
    """Loss or gradient requested over an empty batch."""


class EmptySetError(PromptGeoError):
    """Metric requested over an empty score set."""


class NumericalError(PromptGeoError):
    """A numerical computation produced non-finite values."""
