"""
Logging setup for RULER.

Library modules only create named loggers under "ruler"; handlers are
installed once by the command-line entry point.
"""

import logging

from rich.logging import RichHandler

logger = logging.getLogger("ruler")


def configure_logging(level: str = "INFO", debug: bool = False) -> None:
    """
    Install a rich console handler on the package logger.

    Args:
        level: Log level name
        debug: Force DEBUG and show tracebacks with locals
    """
    resolved = "DEBUG" if debug else level.upper()
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = RichHandler(rich_tracebacks=True, tracebacks_show_locals=debug, show_path=debug)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(resolved)
    logger.propagate = False
