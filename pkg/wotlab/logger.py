import logging
from logging.handlers import RotatingFileHandler

from .config import get_config


def setup_logger(name: str = "wotlab", log_file: str | None = None, level: int | str | None = None) -> logging.Logger:
    """
    Sets up a logger that writes to a file and the console (stderr).
    An empty log_file disables the file handler.
    """
    cfg = get_config()
    if log_file is None:
        log_file = cfg.log_file
    if level is None:
        level = cfg.log_level.upper()

    logger = logging.getLogger(name)
    logger.setLevel(level)

    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    # Add handlers if not already added
    if not logger.handlers:
        if log_file:
            file_handler = RotatingFileHandler(log_file, maxBytes=5*1024*1024, backupCount=5)
            file_handler.setFormatter(formatter)
            file_handler.setLevel(level)
            logger.addHandler(file_handler)

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        console_handler.setLevel(level)
        logger.addHandler(console_handler)

    return logger

# Default logger instance
logger = setup_logger()
