"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage/config problems exit 1, bad
input data exits 2, numeric failures exit 3.
"""


class DisaggError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DisaggError):
    """Invalid configuration: unknown keys, bad values, missing paths."""


class UsageError(DisaggError):
    """Command invoked incorrectly (bad verb, missing argument)."""


class DataError(DisaggError):
    """Malformed or inconsistent input data (CSV rows, grids, hashes)."""


class DimensionError(DisaggError):
    """Tensor shape mismatch; message names the offending layer."""


class NumericError(DisaggError):
    """Non-finite value produced; message names the offending layer."""
