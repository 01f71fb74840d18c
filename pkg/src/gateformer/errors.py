class GateformerError(Exception):
    """Base class for errors raised by this package."""

    kind = "error"


class ConfigError(GateformerError, ValueError):
    kind = "config"


class DataError(GateformerError, ValueError):
    kind = "data"


class CheckpointError(GateformerError, ValueError):
    kind = "checkpoint"


class TrainingError(GateformerError, RuntimeError):
    kind = "training"
