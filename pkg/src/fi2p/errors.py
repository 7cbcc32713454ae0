"""Exception types shared across the package."""


class Fi2pError(Exception):
    """Base class for all package errors."""


class ShapeError(Fi2pError, ValueError):
    """Operand shapes are inconsistent (e.g. matmul inner dims differ)."""


class ConfigError(Fi2pError, ValueError):
    """A configuration is invalid or yields impossible geometry."""


class CheckpointError(Fi2pError, RuntimeError):
    """Checkpoint file is corrupt, truncated, or of the wrong width/version."""


class DataFormatError(Fi2pError, ValueError):
    """A sample or manifest file failed to parse."""


class DatasetError(Fi2pError, ValueError):
    """Dataset contents violate a contract (empty split, empty cloud, ...)."""


class DivergenceError(Fi2pError, RuntimeError):
    """Training produced a non-finite loss."""
