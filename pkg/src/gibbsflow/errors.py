"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, the numerical
guards -> 3.  Plain ValueError / KeyError signal caller bugs.
"""


class ConfigError(Exception):
    """Invalid or incomplete experiment configuration."""


class NumericalGuardError(RuntimeError):
    """A numerical safety guard tripped (overflow, NaN, exploding exponent)."""


class EnumerationCapError(RuntimeError):
    """Cluster enumeration exceeded the configured count limit."""


class MissingBoundaryError(KeyError):
    """A boundary value required within the interaction range is absent."""
