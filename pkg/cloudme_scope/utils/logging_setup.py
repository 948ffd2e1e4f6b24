import logging
import sys
from pythonjsonlogger import jsonlogger
from typing import Optional

_HANDLER_NAME = "cloudme-scope"


def configure_logging(level: str = "INFO", json_format: bool = True) -> None:
    """Attach a single stderr handler to the root logger.

    Data output never travels through logging, so stdout stays clean for
    JSON Lines and CSV.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        if handler.get_name() == _HANDLER_NAME:
            root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.set_name(_HANDLER_NAME)
    formatter: Optional[logging.Formatter]
    if json_format:
        formatter = jsonlogger.JsonFormatter(
            "%(asctime)s %(levelname)s %(name)s %(message)s",
            rename_fields={"levelname": "level", "asctime": "ts"},
        )
    else:
        formatter = logging.Formatter("[%(levelname)s] %(name)s: %(message)s")
    handler.setFormatter(formatter)
    root.addHandler(handler)
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))
