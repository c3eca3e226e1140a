from .logger import get_logger


class FusionSchedError(Exception):
    """Base class for all exceptions raised by fusionsched."""

    exit_code = 7

    def __init__(self, message: str, type: str = "FusionSchedError"):
        super().__init__(message)
        self.type = type
        self.logger = get_logger("errors")
        self._log()

    def _log(self) -> None:
        self.logger.error(f"{self.type}: {self.args[0]}")


class ConfigurationError(FusionSchedError):
    """Invalid configuration values, generation ranges or schema violations."""
    exit_code = 3

    def __init__(self, message: str):
        super().__init__(message, type="ConfigurationError")


class FilterError(FusionSchedError):
    """Numerical failure inside a filter recursion."""
    exit_code = 7

    def __init__(self, message: str):
        super().__init__(message, type="FilterError")


class StaleMeasurementError(FusionSchedError):
    """A delayed measurement is older than the belief buffer; it is dropped."""
    exit_code = 7

    def __init__(self, message: str):
        super().__init__(message, type="StaleMeasurementError")

    def _log(self) -> None:
        # Stale drops are expected at runtime; they are counted, not errors.
        self.logger.warning(f"{self.type}: {self.args[0]}")


class UsageError(FusionSchedError):
    """API misuse: wrong shapes, reused tapes, stepping a finished episode."""
    exit_code = 7

    def __init__(self, message: str):
        super().__init__(message, type="UsageError")


class PolicyUpdateError(FusionSchedError):
    """A PPO update was aborted (non-finite probability ratios)."""
    exit_code = 6

    def __init__(self, message: str):
        super().__init__(message, type="PolicyUpdateError")


class TrainingDivergedError(FusionSchedError):
    """The value estimates blew past the divergence guard."""
    exit_code = 6

    def __init__(self, message: str):
        super().__init__(message, type="TrainingDivergedError")


class CheckpointError(FusionSchedError):
    """Missing, truncated or mismatched checkpoint file."""
    exit_code = 4

    def __init__(self, message: str):
        super().__init__(message, type="CheckpointError")


class StorageError(FusionSchedError):
    """Failure reading or writing an artifact on disk."""
    exit_code = 5

    def __init__(self, message: str):
        super().__init__(message, type="StorageError")
