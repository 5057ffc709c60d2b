"""Exception types raised across the package."""


class GraphError(ValueError):
    """A graph cannot be built from the given edges or generator arguments."""


class ShapeError(ValueError):
    """Operand dimensions or lengths do not agree."""


class SpectralSizeError(ValueError):
    """A dense spectral computation was requested on a graph above the size limit."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped at its iteration cap without converging."""


class NonFiniteLossError(RuntimeError):
    """A training step produced a loss that is nan or infinite."""


class DatasetError(ValueError):
    """An input file is malformed. The message names the file and line."""


class ConfigError(ValueError):
    """An experiment configuration violates the schema."""


class AcceptanceError(RuntimeError):
    """A property check or acceptance threshold failed."""
