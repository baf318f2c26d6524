"""
Utilities shared by the dynslam modules: logger wiring and artifact file I/O.
"""
import logging

from .log import get_logger as plain_get_logger, logging_context, set_console_level
from ..config import config

ROOT_LOGGER = "dynslam"


def get_logger(name: str = '', stream: str | bool | None = None, file: str | bool | None = None,
               *, log_file: str | None = None, level: str | None = None) -> logging.Logger:
    """logger for `name`; dynslam submodule loggers propagate to the package logger"""
    logger_name = name or ROOT_LOGGER
    if logger_name.startswith(ROOT_LOGGER + "."):
        return logging.getLogger(logger_name)
    stream_level = config.LOG_LEVEL_CONSOLE if stream is None else stream
    file_level = (config.LOG_LEVEL if config.LOG_FILE else '') if file is None else file
    log_level = "DEBUG" if level is None else level
    log_filename = config.LOG_FILE if log_file is None else log_file

    return plain_get_logger(logger_name, stream_level, file_level, log_file=log_filename,
                            level=log_level)


logger = get_logger(__package__ or __name__ or "")
