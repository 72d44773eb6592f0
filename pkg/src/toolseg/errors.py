"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError is a usage/configuration
problem (exit 1), DataError covers unreadable or inconsistent inputs
(exit 2), and everything else raised from a run is a runtime failure
(exit 3).
"""


class ToolsegError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ToolsegError):
    """Invalid configuration value, flag, or parameter."""


class DataError(ToolsegError):
    """Malformed or inconsistent input data (annotations, images, files)."""


class ShapeError(ToolsegError):
    """Tensor or image dimensions do not match what an operation expects."""


class TrainingError(ToolsegError):
    """Optimization failed (non-finite loss or gradient, bad state)."""
