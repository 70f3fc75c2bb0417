"""
Configuration settings for the project.
Contains paths, model constants, and other defaults.
"""
import os

# Path configurations
PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
CONFIG_DIR = os.path.join(PROJECT_ROOT, "config")
FIT_DEFAULTS_FILE = os.path.join(CONFIG_DIR, "fit_defaults.json")

TOOL_NAME = "hierflow"
TOOL_VERSION = "1.0.0"
SCHEMA_VERSION = 1

# Geography
EARTH_RADIUS_KM = 6371.0088  # WGS84 mean radius

# Model
WEIGHT_FLOOR = 1e-12
DEFAULT_LADDER_SIZE = 10
DEFAULT_BIN_COUNT = 12
PREFIT_LEVEL = 0.5  # f(0.5) == 1

# Parallel move evaluation
THREADS_ENV_VAR = "HIERFLOW_THREADS"
PARALLEL_MIN_CANDIDATES = 256

# CLI exit codes
EXIT_INPUT_ERROR = 2
EXIT_DEGENERATE_FIT = 3
