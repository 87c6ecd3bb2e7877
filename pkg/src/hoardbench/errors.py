"""Shared exception types."""


class SchemaError(ValueError):
    """Observation or option payload does not match the declared schema."""


class InputError(ValueError):
    """A value is out of range, non-finite, or otherwise unusable."""


class ConfigurationError(ValueError):
    """A configuration combination is invalid."""
