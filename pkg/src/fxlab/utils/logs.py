import logging
from pathlib import Path

LOG_FORMAT = "%(asctime)s - %(name)s [%(levelname)s]: %(message)s"
DATE_FORMAT = "%Y/%m/%d %H:%M:%S"

# Root of every module logger (`fxlab.data`, `fxlab.var`, ...)
ROOT_LOGGER = "fxlab"


def _attach(logger: logging.Logger, handler: logging.Handler) -> logging.Logger:
    """Apply the shared formatter to `handler` and add it, unless an equivalent handler
    is already attached."""

    for existing in logger.handlers:
        if type(existing) is type(handler) and getattr(
            existing, "baseFilename", None
        ) == getattr(handler, "baseFilename", None):
            handler.close()
            return logger

    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)
    handler.setFormatter(formatter)
    logger.addHandler(handler)
    return logger


def setup_file_logger(
    name: str,
    path: Path | str,
):
    """Build a logger that writes to the specified file."""

    logger = logging.getLogger(name)
    # The file lives next to the run's artifacts
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return _attach(logger, logging.FileHandler(path, encoding="utf-8"))


def setup_console_logger(
    name: str,
):
    """Build a logger that streams the log to the console."""

    logger = logging.getLogger(name)
    return _attach(logger, logging.StreamHandler())


def set_level(debug: bool, name: str = ROOT_LOGGER) -> None:
    """Set logging level to `INFO` or `DEBUG`."""

    logging.getLogger(name).setLevel("DEBUG" if debug is True else "INFO")


def close_file_handlers(name: str = ROOT_LOGGER) -> None:
    """Detach and close every file handler of the logger, keeping the console."""

    logger = logging.getLogger(name)
    for handler in list(logger.handlers):
        if isinstance(handler, logging.FileHandler):
            logger.removeHandler(handler)
            handler.close()
