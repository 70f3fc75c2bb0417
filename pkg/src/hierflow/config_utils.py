import os
import json
import logging

from config import FIT_DEFAULTS_FILE, THREADS_ENV_VAR
from hierflow.data_structures import BinSpec, FitConfig, ObjectiveSpec, default_ladder
from hierflow.exceptions import InputValidationError

logger = logging.getLogger(__name__)

FIT_KEYS = ("objective", "include_loops", "ladder_size", "ladder", "bin_mode", "bin_count", "bin_edges",
            "weight_loop_tol", "weight_loop_max_iter", "outer_max_sweeps", "min_move_gain", "seed",
            "mode", "workers")


def _read_json(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found at: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise InputValidationError(f"config file {path} is not valid JSON: {e}")


def load_fit_defaults(path=FIT_DEFAULTS_FILE):
    """Default fit settings from the bundled JSON (the 'fit_defaults' block)"""
    data = _read_json(path)
    defaults = dict(data.get("fit_defaults", {}))
    logger.debug(f"Loaded fit defaults from {path}")
    return defaults


def load_user_config(path):
    """User override file: either a bare mapping or one with a 'fit_defaults' block"""
    data = _read_json(path)
    if not isinstance(data, dict):
        raise InputValidationError(f"config file {path} must hold a JSON object")
    return dict(data.get("fit_defaults", data))


def build_fit_config(overrides=None, defaults=None) -> FitConfig:
    """
    Merge defaults with overrides (None values ignored) into a validated FitConfig.

    Raises:
        InputValidationError: unknown keys or out-of-range values
    """
    settings = dict(load_fit_defaults() if defaults is None else defaults)
    for key, value in (overrides or {}).items():
        if value is not None:
            settings[key] = value
    unknown = sorted(set(settings) - set(FIT_KEYS))
    if unknown:
        raise InputValidationError(f"unknown configuration keys: {unknown}")

    if settings.get("ladder") is not None:
        ladder = tuple(settings["ladder"])
    else:
        ladder = default_ladder(settings.get("ladder_size", 10))

    bin_mode = settings.get("bin_mode", "logarithmic")
    if settings.get("bin_edges") is not None:
        bins = BinSpec.explicit(settings["bin_edges"])
    elif bin_mode in ("explicit", "explicit-edges"):
        raise InputValidationError("explicit bin mode requires bin edges")
    else:
        bins = BinSpec(mode=bin_mode, count=settings.get("bin_count", 12))

    try:
        return FitConfig(
            objective=ObjectiveSpec(kind=settings.get("objective", "poisson-normal"),
                                    include_loops=bool(settings.get("include_loops", False))),
            ladder=ladder,
            bins=bins,
            weight_loop_tol=float(settings.get("weight_loop_tol", 1e-8)),
            weight_loop_max_iter=int(settings.get("weight_loop_max_iter", 200)),
            outer_max_sweeps=int(settings.get("outer_max_sweeps", 100)),
            min_move_gain=float(settings.get("min_move_gain", 1e-10)),
            seed=int(settings.get("seed", 0)),
            mode=settings.get("mode", "spatial"),
            workers=int(settings.get("workers", 1)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, InputValidationError):
            raise
        raise InputValidationError(f"invalid configuration value: {e}")


def resolve_worker_count(configured=1, environ=None):
    """Worker processes: HIERFLOW_THREADS when set (0 means os.cpu_count()), else the configured count"""
    environ = os.environ if environ is None else environ
    raw = environ.get(THREADS_ENV_VAR, "").strip()
    if not raw:
        return int(configured)
    try:
        value = int(raw)
    except ValueError:
        raise InputValidationError(f"{THREADS_ENV_VAR} must be an integer, got '{raw}'")
    if value < 0:
        raise InputValidationError(f"{THREADS_ENV_VAR} must be >= 0, got {value}")
    return value or (os.cpu_count() or 1)
