"""Logging configuration for the fracdiff command line."""
import logging
import sys

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def setup_logging(verbosity: int = 0, quiet: bool = False) -> logging.Logger:
    """Route log records to stderr at a level chosen by ``-v`` count, or silence them."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    if quiet:
        root.addHandler(logging.NullHandler())
        logging.disable(logging.CRITICAL)
        return logging.getLogger("fracdiff")
    logging.disable(logging.NOTSET)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(LEVELS[min(max(verbosity, 0), len(LEVELS) - 1)])
    return logging.getLogger("fracdiff")
