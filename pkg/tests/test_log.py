import io
import logging

from dynslam.utils.log import get_logger, run_context


def console_of(name: str) -> tuple[logging.Logger, io.StringIO]:
    logger = get_logger(name, "DEBUG")
    logger.propagate = False
    buffer = io.StringIO()
    handler = next(h for h in logger.handlers if isinstance(h, logging.StreamHandler))
    handler.setStream(buffer)
    return logger, buffer


def test_records_carry_the_run_context():
    logger, buffer = console_of("dynslam_log_context_test")
    logger.info("outside")
    with run_context(sequence="walking_xyz"):
        logger.info("sequence only")
        with run_context(frame=1.5):
            logger.info("inside a frame")
        logger.info("frame closed")
    lines = buffer.getvalue().splitlines()
    assert "[-@-]" in lines[0]
    assert "[walking_xyz@-]" in lines[1]
    assert "[walking_xyz@1.5]" in lines[2] and lines[2].endswith("inside a frame")
    assert "[walking_xyz@-]" in lines[3]


def test_handlers_are_not_duplicated():
    first = get_logger("dynslam_log_dedup_test", "INFO")
    second = get_logger("dynslam_log_dedup_test", "INFO")
    assert first is second
    assert sum(isinstance(h, logging.StreamHandler) for h in second.handlers) == 1
