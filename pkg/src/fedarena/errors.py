"""Exception types shared across the package."""


class FedArenaError(Exception):
    """Base class for all package errors."""


class ShapeError(FedArenaError):
    """Matrix/vector dimensions do not line up."""


class LayoutError(FedArenaError):
    """Flat parameter values do not match the declared layout."""


class NumericError(FedArenaError):
    """A NaN or infinity appeared where finite values are required."""


class FormatError(FedArenaError):
    """A file failed to parse; message names the offending offset or line."""


class ConfigError(FedArenaError):
    """An experiment configuration failed validation."""
