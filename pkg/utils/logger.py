import logging
import os
from pathlib import Path

# Simulation logs land next to the reports unless ECOROUTE_LOG_DIR says otherwise
LOG_DIR = Path(os.environ.get("ECOROUTE_LOG_DIR", "logs"))
LOG_FILE = LOG_DIR / "ecoroute.log"
os.makedirs(LOG_DIR, exist_ok=True)

LOG_FORMAT = "[%(asctime)s] %(levelname)s — %(name)s — %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

logging.basicConfig(
    level=logging.INFO,
    format=LOG_FORMAT,
    datefmt=DATE_FORMAT,
    handlers=[
        logging.FileHandler(LOG_FILE, mode="a", encoding="utf-8"),
        logging.StreamHandler(),
    ],
)

# Pool workers inherit this config
for _noisy in ("numexpr", "asyncio"):
    logging.getLogger(_noisy).setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Named logger for one module, e.g. ``get_logger(__name__)``."""
    return logging.getLogger(name)


def set_verbose(verbose: bool) -> None:
    """Switch the root logger between INFO and DEBUG (per-epoch guidance changes)."""
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.INFO)
