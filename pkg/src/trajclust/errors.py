"""Error taxonomy shared across the package.

The split mirrors the CLI exit codes: configuration and parameter mistakes,
problems with input data, and numerical failures such as a similarity graph
with isolated vertices.
"""


class TrajclustError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(TrajclustError, ValueError):
    """A parameter, configuration value, or matrix shape is invalid."""


class DataError(TrajclustError, ValueError):
    """Input data could not be read, parsed, or validated."""


class NumericalError(TrajclustError, RuntimeError):
    """A computation failed numerically (zero-probability sequence, ...)."""


class DegenerateGraphError(NumericalError):
    """The similarity graph has vertices with (near) zero degree."""
