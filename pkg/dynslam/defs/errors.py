"""Exceptions raised by dynslam; the CLI maps them to exit codes."""


class DynSlamError(Exception):
    """base class of every dynslam error"""


class DataError(DynSlamError):
    """input data is missing, unreadable or cannot be used"""


class DegenerateError(DataError):
    """the geometry of the input does not determine a unique solution"""


class ConfigError(DynSlamError):
    """settings failed validation"""
