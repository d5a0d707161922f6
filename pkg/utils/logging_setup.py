import logging
import os
import sys
from logging.handlers import RotatingFileHandler

from config.settings import LOG_PATH


class ColorFormatter(logging.Formatter):
    """Console formatter that wraps each line in its level colour."""

    # ANSI Color Codes
    GREY = "\x1b[38;20m"
    BLUE = "\x1b[34;20m"
    YELLOW = "\x1b[33;20m"
    RED = "\x1b[31;20m"
    BOLD_RED = "\x1b[31;1m"
    RESET = "\x1b[0m"

    FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    COLORS = {
        logging.DEBUG: GREY,
        logging.INFO: BLUE,
        logging.WARNING: YELLOW,
        logging.ERROR: RED,
        logging.CRITICAL: BOLD_RED,
    }

    def __init__(self, use_color: bool = True):
        super().__init__(self.FORMAT, datefmt="%H:%M:%S")
        self.use_color = use_color

    def format(self, record):
        line = super().format(record)
        if not self.use_color:
            return line
        return self.COLORS.get(record.levelno, "") + line + self.RESET


def setup_logging(level: int = logging.INFO, log_path: str | None = LOG_PATH) -> str | None:
    """Configure the root logger.

    Console output goes to stderr because stdout carries CSV tables. Pass
    ``log_path=None`` to skip the rotating file handler.
    """
    root = logging.getLogger()
    root.setLevel(level)

    for h in list(root.handlers):
        root.removeHandler(h)

    sh = logging.StreamHandler(sys.stderr)
    sh.setLevel(level)
    sh.setFormatter(ColorFormatter(use_color=sys.stderr.isatty()))
    root.addHandler(sh)

    if log_path:
        os.makedirs(os.path.dirname(log_path), exist_ok=True)
        fmt_file = logging.Formatter("%(asctime)s %(levelname)s %(name)s [%(filename)s:%(lineno)d]: %(message)s")
        fh = RotatingFileHandler(log_path, maxBytes=5 * 1024 * 1024, backupCount=3, encoding="utf-8")
        fh.setLevel(level)
        fh.setFormatter(fmt_file)
        root.addHandler(fh)

    return log_path
