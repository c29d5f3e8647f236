"""Shared configuration, paths, and logging."""
import os
import json
import logging
import pathlib

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.environ.get("CRLAB_LOG_LEVEL", "INFO").upper()
DEFAULT_CWD = os.environ.get("CRLAB_CWD", os.getcwd())
LOG_PATH = os.environ.get("CRLAB_LOG_PATH", os.path.join(DEFAULT_CWD, "crlab_debug.log"))
DEFAULT_OUT_DIR = os.environ.get("CRLAB_OUT_DIR", os.path.join(DEFAULT_CWD, "crlab_out"))

# Setup logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format='%(asctime)s [%(levelname)s] %(message)s',
    handlers=[
        logging.FileHandler(LOG_PATH, mode='a')
    ]
)
logger = logging.getLogger("crlab")


def _env_int(name, default, minimum=1):
    """Read a positive integer from the environment, falling back to default on bad values."""
    raw = os.environ.get(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"[Config] ignoring {name}={raw!r}: not an integer")
        return default
    if value < minimum:
        logger.warning(f"[Config] ignoring {name}={raw!r}: must be >= {minimum}")
        return default
    return value


SUPPORTED_SUBCOMMANDS = ["spectrum", "kernel", "embed", "deform", "continue", "example", "rates", "all"]
SAMPLE_SCHEMES = {"hopf-grid", "quasi-random"}
BUMP_SHAPES = {"standard-bump"}

DEFAULT_RESOLUTION = 32
DEFAULT_DELTA1 = 0.25
DEFAULT_DELTA2 = 0.75
DEFAULT_MOMENT_ORDER = 8
DEFAULT_K_GRID = [16, 32, 64, 128]
DEFAULT_SEED = 7
DEFAULT_SAMPLE_COUNT = 200
DEFAULT_QUASI_RANDOM_COUNT = 64
DEFAULT_JOBS = _env_int("CRLAB_JOBS", 1)

# Initial bracket half-width is BRACKET_CONSTANT / k, see core.embedding.solve_phi.
BRACKET_CONSTANT = 4.0
# Smallest magnitude kept when evaluating the e^{-k} G block.
UNDERFLOW_FLOOR = 1e-300

DEFAULT_TOLERANCES = {
    "solve": 1e-12,
    "certificate": 1e-10,
    "invariants": 1e-9,
}

DEFAULT_CONTINUATION = {
    "epsilons": [0.05, 0.1, 0.5],
    "fd_epsilon": 1e-3,
    "directions": 5,
    "bases": [
        {"exponents": [[1, 0], [0, 2]], "weights": [1.0, 2.0], "r": [1.0, 1.0]},
    ],
}


def _default_run_config():
    return {
        "model": {"p": 1.0, "q": 1.0, "resolution": DEFAULT_RESOLUTION},
        "cutoff": {
            "delta1": DEFAULT_DELTA1,
            "delta2": DEFAULT_DELTA2,
            "moment_order": DEFAULT_MOMENT_ORDER,
        },
        "k_grid": list(DEFAULT_K_GRID),
        "samples": {
            "scheme": "hopf-grid",
            "count": DEFAULT_SAMPLE_COUNT,
            "quasi_random_count": DEFAULT_QUASI_RANDOM_COUNT,
            "seed": DEFAULT_SEED,
        },
        "tolerances": dict(DEFAULT_TOLERANCES),
        "continuation": json.loads(json.dumps(DEFAULT_CONTINUATION)),
        "output_dir": DEFAULT_OUT_DIR,
        "jobs": DEFAULT_JOBS,
    }


def _read_json_file(path):
    """Read a JSON document, returning (data, error_message)."""
    path = pathlib.Path(path)
    if not path.exists():
        return None, f"config file not found: {path}"
    try:
        return json.loads(path.read_text(encoding="utf-8")), None
    except (OSError, json.JSONDecodeError) as exc:
        return None, f"config file is not valid JSON: {exc}"


def _get_environment_info():
    import platform
    import numpy
    import scipy

    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
    }
