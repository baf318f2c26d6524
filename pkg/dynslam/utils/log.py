"""Logger setup for dynslam runs.

Every handler made here stamps records with the sequence and frame being processed
(``-`` outside a run), set with ``run_context``.
"""

import logging
import logging.handlers
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Generator

LOG_LEVEL = {
    "INFO": logging.INFO,
    "DEBUG": logging.DEBUG,
    "ERROR": logging.ERROR,
    "WARNING": logging.WARNING,
    "CRITICAL": logging.CRITICAL
}

CONSOLE_FORMAT = ("#%(levelname)9s - %(name)s [%(sequence)s@%(frame)s] - "
                  "%(filename)s:%(lineno)d %(funcName)s() - %(message)s")
FILE_FORMAT = ("%(asctime)s %(levelname)s - %(name)s [%(sequence)s@%(frame)s] "
               "- %(filename)s:%(lineno)d  %(module)s.%(funcName)s() - %(message)s")

_run_fields: ContextVar[dict[str, str]] = ContextVar("dynslam_run_fields", default={})


class RunContextFilter(logging.Filter):
    """adds `sequence` and `frame` attributes from the active run context"""

    def filter(self, record: logging.LogRecord) -> bool:
        fields = _run_fields.get()
        record.sequence = fields.get("sequence", "-")
        record.frame = fields.get("frame", "-")
        return True


@contextmanager
def run_context(**fields: object) -> Generator[None, None, None]:
    """tag records logged inside the block, e.g. run_context(sequence="walking_xyz")

    Contexts nest; inner fields override outer ones until the block exits. Worker threads
    start without a context and set their own.
    """
    token = _run_fields.set({**_run_fields.get(), **{k: str(v) for k, v in fields.items()}})
    try:
        yield
    finally:
        _run_fields.reset(token)


def get_logger(name: str, stream: str | bool = 'INFO', file: str | bool = '',
               *, log_file: str = '', level: str = 'DEBUG') -> logging.Logger:
    """configure a logger with a console handler and an optional rotating file handler

    Args:
        name: the name of the logger that will be shown in the logs
        stream: set stream log level, default is 'INFO'
        file: set rotating file log level, default is OFF
        log_file: path of the rotating log file, default is dynslam.log in the working dir
        level: the logger's own level, default is 'DEBUG'

    Returns:
        logger: the logger object with name and handlers set up
    """
    logger_ = logging.getLogger(name)
    logger_.setLevel(LOG_LEVEL[level] if level in LOG_LEVEL else logging.DEBUG)

    handler_classes = {h.__class__ for h in logger_.handlers}
    if stream in LOG_LEVEL and logging.StreamHandler not in handler_classes:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(LOG_LEVEL[stream])
        console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
        console_handler.addFilter(RunContextFilter())
        logger_.addHandler(console_handler)

    log_file = log_file or "dynslam.log"
    file_handler_class = logging.handlers.RotatingFileHandler
    if file in LOG_LEVEL:
        if file_handler_class in handler_classes:
            logger_.debug("Logger %s already has a file handler, not adding one for level %s",
                          name, file)
        else:
            file_handler = file_handler_class(
                log_file, maxBytes=10485760, backupCount=9, encoding='utf-8')
            file_handler.setLevel(LOG_LEVEL[file])
            file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
            file_handler.addFilter(RunContextFilter())
            logger_.addHandler(file_handler)

    if not logger_.hasHandlers():
        logger_.addHandler(logging.NullHandler())

    return logger_


def set_console_level(logger_: logging.Logger, stream: str) -> None:
    """change the level of the console handlers already attached to a logger"""
    if stream not in LOG_LEVEL:
        return
    for handler in logger_.handlers:
        if isinstance(handler, logging.StreamHandler) and not isinstance(
                handler, logging.FileHandler):
            handler.setLevel(LOG_LEVEL[stream])


@contextmanager
def logging_context(*args, **kwargs) -> Generator[logging.Logger, None, None]:
    """use contextmanager to setup/shutdown logging"""
    logger_ = None
    try:
        logger_ = get_logger(*args, **kwargs)
        yield logger_
    finally:
        try:
            if isinstance(logger_, logging.Logger):
                logger_.debug("shutting down the logging facility...")
        except Exception as e:
            print(f"Can't log final message to logger, {e=}"
                  "shutting down the logging facility...")
        logging.shutdown()
