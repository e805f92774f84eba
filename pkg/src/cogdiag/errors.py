"""Exception hierarchy shared across the package.

Everything raised on purpose derives from CogdiagError so callers (CLI,
service) can map domain failures to clean error messages without catching
bare Exception.
"""


class CogdiagError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(CogdiagError):
    """A data file is malformed: bad header, bad value, wrong width."""


class DataPipelineError(CogdiagError):
    """Preprocessing or splitting produced an unusable dataset."""


class GraphError(CogdiagError):
    """Computation-graph misuse: non-scalar backward root, unknown op."""


class GraphShapeError(GraphError):
    """Operand shapes incompatible for a graph op; message names the op."""


class NonFiniteError(CogdiagError):
    """A NaN or infinity appeared where finite values are required."""


class TrainingDivergedError(NonFiniteError):
    """Loss became non-finite during training; carries epoch/batch info."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class MetricError(CogdiagError):
    """A metric is undefined for the given input (e.g. no eligible pairs)."""


class CheckpointError(CogdiagError):
    """Checkpoint file missing, corrupt, or of the wrong model kind."""


class ConfigError(CogdiagError):
    """Invalid run configuration value or unknown config key."""
