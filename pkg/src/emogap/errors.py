"""Exception hierarchy shared across the library.

The CLI maps these onto its documented exit codes: ConfigError -> 2,
DataFormatError -> 3, NumericalError -> 4. Everything else is a plain bug
and escapes unmapped.
"""


class EmogapError(Exception):
    """Base class for all library errors."""


class ShapeError(EmogapError):
    """Operands have incompatible shapes; message names both shapes."""


class GraphError(EmogapError):
    """Autodiff contract violation (e.g. backward from a non-scalar)."""


class DegenerateMaskError(EmogapError):
    """A softmax row or pooling window has no valid entries."""


class LabelError(EmogapError):
    """A class id or label string is outside its closed set."""


class NumericalError(EmogapError):
    """A forward op produced NaN/Inf from finite inputs."""


class ConfigError(EmogapError):
    """Invalid or inconsistent run configuration."""


class DataFormatError(EmogapError):
    """Corrupt or inconsistent on-disk data (feature files, manifests)."""
