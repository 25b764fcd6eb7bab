"""
Exceptions raised by patchad

Every error carries the process exit code the command line maps it to.
"""


class PatchADError(Exception):
    """Base class for all patchad errors"""

    exit_code: int = 1


class ConfigError(PatchADError, ValueError):
    """Invalid or inconsistent configuration"""

    exit_code = 1


class ShapeError(PatchADError, ValueError):
    """Tensor shapes, axes or contracts do not line up"""

    exit_code = 2


class DataError(PatchADError, ValueError):
    """Input data cannot be parsed or does not fit the model"""

    exit_code = 2


class NumericError(PatchADError, ArithmeticError):
    """Non-finite values or a value outside the domain of a function"""

    exit_code = 3


class CheckpointError(PatchADError):
    """A checkpoint file is corrupt or does not match the expected model"""

    exit_code = 2


class MetricUndefinedError(PatchADError, ValueError):
    """A metric has no defined value for the given labels"""

    exit_code = 2
