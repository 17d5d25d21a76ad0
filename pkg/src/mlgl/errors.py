"""Exception hierarchy; the CLI maps these to exit codes and JSON."""


class MlglError(Exception):
    pass


class ConfigError(MlglError):
    pass


class DataError(MlglError):
    pass


class WavError(MlglError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CheckpointError(MlglError):
    pass


class TrainingError(MlglError):
    pass


class StatsError(MlglError):
    pass
