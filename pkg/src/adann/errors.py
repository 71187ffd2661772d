"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes (see ``adann.cli``): config and
usage problems exit 2, shape mismatches exit 3, I/O failures exit 4.
"""


class AdannError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AdannError):
    """Malformed or inconsistent run configuration."""


class UsageError(AdannError):
    """An operation was called with arguments outside its contract."""


class ShapeError(AdannError):
    """Array dimensions do not line up (model vs features vs labels)."""


class DegenerateInputError(AdannError):
    """Input is structurally valid but numerically degenerate (e.g. all-zero)."""
