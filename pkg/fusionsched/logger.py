from datetime import datetime
from typing import Dict, Optional

from .lock import lock_manager


class bcolors:
    """Colors for terminal output."""
    OKBLUE = '\033[94m'
    OKGREEN = '\033[92m'
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'


class LoggerLevels:
    """Logging levels, ordered by severity."""
    DEBUG = 'DEBUG'
    INFO = 'INFO'
    SUCCESS = 'SUCCESS'
    WARNING = 'WARNING'
    ERROR = 'ERROR'
    CRITICAL = 'CRITICAL'

    ORDER = {DEBUG: 10, INFO: 20, SUCCESS: 25, WARNING: 30, ERROR: 40, CRITICAL: 50}

    @classmethod
    def rank(cls, level: str) -> int:
        return cls.ORDER.get(level.upper(), cls.ORDER[cls.INFO])


class _LoggingSettings:
    """Process-wide sink settings, set once by the CLI."""
    level: str = LoggerLevels.WARNING
    log_file: Optional[str] = None
    to_console: bool = True


def configure_logging(level: str = LoggerLevels.INFO,
                      log_file: Optional[str] = None,
                      to_console: bool = True) -> None:
    """
    Configure the sinks used by every component logger.

    Args:
        level: Minimum level that is emitted
        log_file: Path of the log file, or None to keep logs off disk
        to_console: Whether to echo to stdout with colors
    """
    if level.upper() not in LoggerLevels.ORDER:
        raise ValueError(f"Unknown log level: {level}")
    _LoggingSettings.level = level.upper()
    _LoggingSettings.log_file = log_file
    _LoggingSettings.to_console = to_console


class Logger:
    """
    A simple logger that writes timestamped lines to a file and/or colored
    lines to the console.

    Explicit `log_file` / `to_console` arguments pin the sinks; when left as
    None they follow `configure_logging`.
    """

    def __init__(self, component: str = 'fusionsched',
                 log_file: Optional[str] = None,
                 to_console: Optional[bool] = None,
                 level: Optional[str] = None):
        self.component = component
        self._log_file = log_file
        self._to_console = to_console
        self._level = level

    @property
    def log_file(self) -> Optional[str]:
        return self._log_file if self._log_file is not None else _LoggingSettings.log_file

    @property
    def to_console(self) -> bool:
        return self._to_console if self._to_console is not None else _LoggingSettings.to_console

    @property
    def level(self) -> str:
        return self._level if self._level is not None else _LoggingSettings.level

    def _write_log(self, level: str, message: str) -> None:
        filename = self.log_file
        if filename is None:
            return
        time = datetime.now().strftime(r"%Y-%m-%d %H:%M:%S")
        with lock_manager.writing(filename):
            with open(filename, 'a', encoding='utf-8') as f:
                f.write(f'[{time}] [{level}] [{self.component}] {message}\n')

    def _console_log(self, level: str, message: str) -> None:
        color = {
            LoggerLevels.INFO: bcolors.OKBLUE,
            LoggerLevels.WARNING: bcolors.WARNING,
            LoggerLevels.ERROR: bcolors.FAIL,
            LoggerLevels.DEBUG: bcolors.OKGREEN,
            LoggerLevels.CRITICAL: bcolors.FAIL,
            LoggerLevels.SUCCESS: bcolors.OKGREEN
        }.get(level, bcolors.OKBLUE)
        print(f"{color}[{level}] [{self.component}] {message}{bcolors.ENDC}")

    def log(self, level: str, message: str) -> None:
        """
        Log a message with a given level.
        """
        level = level.upper()
        if LoggerLevels.rank(level) < LoggerLevels.rank(self.level):
            return
        self._write_log(level, message)
        if self.to_console:
            self._console_log(level, message)

    def enabled_for(self, level: str) -> bool:
        return LoggerLevels.rank(level) >= LoggerLevels.rank(self.level)

    def debug(self, message: str) -> None:
        self.log(LoggerLevels.DEBUG, message)

    def info(self, message: str) -> None:
        self.log(LoggerLevels.INFO, message)

    def success(self, message: str) -> None:
        self.log(LoggerLevels.SUCCESS, message)

    def warning(self, message: str) -> None:
        self.log(LoggerLevels.WARNING, message)

    def error(self, message: str) -> None:
        self.log(LoggerLevels.ERROR, message)


_loggers: Dict[str, Logger] = {}


def get_logger(component: str) -> Logger:
    """Return the shared logger for a component."""
    if component not in _loggers:
        _loggers[component] = Logger(component)
    return _loggers[component]
