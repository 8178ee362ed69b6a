"""
Configuration Module

Runtime settings for jonesexpand, read from the environment (and a local
.env file when present) with the defaults used by the acceptance runs.
"""

import os
import logging
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
try:
    load_dotenv()
except Exception:
    pass  # Silently continue if .env file doesn't exist

LOG_LEVEL = os.getenv("JONESEXP_LOG_LEVEL", "WARNING").upper()
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).parent.parent


def _int_setting(name: str, default: int) -> int:
    """Read an integer environment variable, falling back to the default on bad input."""
    try:
        return int(os.getenv(name, str(default)))
    except (ValueError, TypeError):
        logger.warning(f"Invalid {name} value, using default: {default}")
        return default


def knot_dir() -> Path:
    """Directory holding the knot manifest (*.yaml) and operator files."""
    return Path(os.getenv("JONESEXP_KNOT_DIR", str(PROJECT_ROOT / "knots")))


DEFAULT_PRECISION = _int_setting("JONESEXP_PRECISION", 256)
DEFAULT_N_MIN = _int_setting("JONESEXP_N_MIN", 50)
DEFAULT_N_MAX = _int_setting("JONESEXP_N_MAX", 400)
PARALLEL_JOBS = _int_setting("JONESEXP_PARALLEL_JOBS", 1)

# Jet length head-room on top of the requested order for numeric branches.
JET_PADDING = 4
MIN_PRECISION = 64
SCHEMA_VERSION = 1
