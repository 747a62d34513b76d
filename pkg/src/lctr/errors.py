"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands or arrays have incompatible shapes."""


class ConfigurationError(ValueError):
    """A configuration value is invalid or inconsistent."""


class ManifestError(RuntimeError):
    """A checkpoint manifest does not match the expected parameter set."""
