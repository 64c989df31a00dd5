import logging
import os
import sys
from pathlib import Path

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
LOG_DIR = Path(__file__).parent / "logs"


def setup_logging(enable_file_logging: bool = False, level: str = None) -> logging.Logger:
    """Configure the root logger once; stdout is left free for CSV/JSON output.

    Level comes from ``level``, then ``LOG_LEVEL``, then WARNING.
    """
    level_name = (level or os.getenv("LOG_LEVEL") or "WARNING").upper()
    root = logging.getLogger()
    root.setLevel(getattr(logging, level_name, logging.WARNING))

    for handler in list(root.handlers):
        if getattr(handler, "_sections_handler", False):
            root.removeHandler(handler)

    formatter = logging.Formatter(LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(formatter)
    stream._sections_handler = True
    root.addHandler(stream)

    if enable_file_logging:
        LOG_DIR.mkdir(exist_ok=True)
        file_handler = logging.FileHandler(LOG_DIR / "sections.log", encoding="utf-8")
        file_handler.setFormatter(formatter)
        file_handler._sections_handler = True
        root.addHandler(file_handler)

    return logging.getLogger("sections")
