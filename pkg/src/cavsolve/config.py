"""Configuration settings for the cavitation solver.

This module defines paths, constants, and default settings used throughout the
package. It reads environment variables (optionally from a ``.env`` file at the
project root) and holds the parameters of the elastic-fluid experiment that
the bundled ``configs/table1.json`` reproduces.
"""

import math
import os
from pathlib import Path

from cavsolve.errors import ConfigError

# Try to load from .env file if dotenv is installed
try:
    from dotenv import load_dotenv

    env_path = Path(__file__).resolve().parent.parent.parent / ".env"
    if env_path.exists():
        load_dotenv(dotenv_path=env_path)
except ImportError:
    # python-dotenv not installed, continue without it
    pass

# Project root directory
PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent

# Directory structure
DATA_DIR = PROJECT_ROOT / "data"
CONFIGS_DIR = PROJECT_ROOT / "configs"
OUTPUT_DIR = Path(os.environ.get("CAVSOLVE_OUTPUT_DIR", PROJECT_ROOT / "output"))

TABLE1_CSV = DATA_DIR / "table1.csv"
TABLE1_CONFIG = CONFIGS_DIR / "table1.json"

LOG_LEVEL = os.environ.get("CAVSOLVE_LOG_LEVEL", "INFO").upper()

# Elastic fluid of the reference experiment: c2 follows from the stress-free rule
FLUID_MATERIAL = {"kappa": 0.0, "q": 2.0, "c1": 1.0, "e1": 2.0, "e2": 1.0}
TABLE1_STRETCHES = (1.1, 1.4)
TABLE1_VOLUME = math.pi * 0.15**2
TABLE1_EPS_SCHEDULE = (0.1, 0.05, 0.025, 0.0125, 0.00625)

# Solver defaults
MESH_CONFIG = {"n_r": 32, "n_theta": 256, "grading": 1.1}

FLOW_CONFIG = {
    "dt": 0.1,
    "tol_u": 1e-5,
    "max_steps": 5000,
    "backtrack_factor": 0.5,
    "min_dt": 1e-6,
    "dt_growth": 1.25,
    "growth_after": 5,
    "linear_solver": "cg",
    "cg_tol": 1e-10,
}

AUGLAG_CONFIG = {
    "gamma": 0.25,
    "beta": 2.0,
    "eta1": 5.0,
    "mu1": 0.0,
    "tol_mu": 1e-3,
    "max_outer": 30,
    "mu_floor": 1e-8,
}

OUTPUT_CONFIG = {"dir": str(OUTPUT_DIR), "dump_fields": False, "trace_flow": False}

R_SHELL = 0.5


def element_threads() -> int:
    """Number of worker threads for element loops, from ``CAVSOLVE_THREADS``.

    Returns:
        int: 1 (sequential, the deterministic default) unless the variable is set.

    Raises:
        ConfigError: if the variable is not a positive integer.
    """
    raw = os.environ.get("CAVSOLVE_THREADS", "1").strip()
    try:
        threads = int(raw)
    except ValueError as e:
        raise ConfigError("CAVSOLVE_THREADS", f"must be a positive integer, got {raw!r}") from e
    if threads < 1:
        raise ConfigError("CAVSOLVE_THREADS", f"must be a positive integer, got {raw!r}")
    return threads
