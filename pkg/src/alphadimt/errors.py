"""Exception types; the CLI maps each to a distinct exit code."""


class ConfigError(ValueError):
    """Invalid configuration or schema violation."""


class DataError(ValueError):
    """Malformed or inconsistent data files."""


class VerificationError(AssertionError):
    """A verification invariant did not hold."""
