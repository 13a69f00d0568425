"""
Configuration constants and settings for tradeoff-lab.
Centralizes every tolerance, grid and cap used across the services.
"""

from typing import Any, Dict, Optional

from .exceptions import ConfigError

# Atom handling for discrete distributions
PRUNE_THRESHOLD = 1e-15
MERGE_TOLERANCE = 1e-12
MASS_TOLERANCE = 1e-12
NORMALIZATION_TOLERANCE = 1e-9

# Poisson truncation (upper tail mass left out of the support)
POISSON_TAIL = 1e-12
POISSON_TAIL_MAX = 1e-3

# Trade-off curve grids
ALPHA_STEP = 1e-4
TAIL_REFINEMENT = {"smallest": 1e-12, "points": 25}
CURVE_TOLERANCE = 1e-10
SYMMETRY_TOLERANCE = 1e-9
LEVY_BISECTION_STEPS = 60

# Neyman-Pearson construction
RATIO_TOLERANCE = 1e-12
QUANTILE_CELLS = 10_000

# LLR convolution
CONVOLUTION_ATOM_CAP = 200_000
EXACT_PRODUCT_LIMIT = 4_000_000
EXP_OVERFLOW_LIMIT = 700.0

# Infinitely divisible limits
GAUSSIAN_SIGMAS = 8.0
GAUSSIAN_CELLS_PER_SIGMA = 2000
TILT_TOLERANCE = 1e-6
WATERFILL_TOLERANCE = 1e-10
WATERFILL_LOG_SLOPE_RANGE = (-60.0, 60.0)
MIXTURE_ALPHA_STEP = 1e-5
MIXTURE_SLOPE_SEPARATION = 1e-5
CROSS_CHECK_TOLERANCE = 1e-4
STOPPING_DRAWS = 2000
STOPPING_LAMBDA_STEP = 1e-3

# Poisson mechanism
SLACK_TOLERANCE = 1e-8
SENSITIVITY_TOLERANCE = 1e-12
VERIFY_ALPHA_STEP = 1e-3

# Coarsening
BIN_TAIL_MASS = 1e-14

# Output formats
CSV_FLOAT_FORMAT = "%.17g"
CURVE_CSV_COLUMNS = ["alpha", "beta"]
DIST_CSV_COLUMNS = ["value", "mass"]

# CLI exit codes
EXIT_CODES = {"OK": 0, "USAGE": 1, "CONTRACT": 2}

# Environment variables (read after load_dotenv in app.py)
LOG_LEVEL_ENV = "TRADEOFF_LOG_LEVEL"
DEFAULT_SEED_ENV = "TRADEOFF_SEED"
DEFAULT_LOG_LEVEL = "WARNING"

# Knobs a spec file may override under its "numerics" key
NUMERICS_DEFAULTS: Dict[str, Any] = {
    "poisson_tail": POISSON_TAIL,
    "alpha_step": ALPHA_STEP,
    "convolution_cap": CONVOLUTION_ATOM_CAP,
    "quantile_cells": QUANTILE_CELLS,
    "gaussian_sigmas": GAUSSIAN_SIGMAS,
    "gaussian_cells_per_sigma": GAUSSIAN_CELLS_PER_SIGMA,
    "mixture_alpha_step": MIXTURE_ALPHA_STEP,
    "cross_check_tolerance": CROSS_CHECK_TOLERANCE,
    "slack_tolerance": SLACK_TOLERANCE,
    "verify_alpha_step": VERIFY_ALPHA_STEP,
    "stopping_draws": STOPPING_DRAWS,
}


def resolve_numerics(overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Merge user overrides over NUMERICS_DEFAULTS.

    Raises:
        ConfigError: unknown key, non-numeric or non-positive value
    """
    numerics = dict(NUMERICS_DEFAULTS)
    if not overrides:
        return numerics

    unknown = sorted(set(overrides) - set(NUMERICS_DEFAULTS))
    if unknown:
        raise ConfigError(f"Unknown numerics keys: {', '.join(unknown)}")

    for key, value in overrides.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"numerics.{key} must be a number")
        if value <= 0:
            raise ConfigError(f"numerics.{key} must be positive")
        # integer knobs stay integers
        if isinstance(NUMERICS_DEFAULTS[key], int):
            value = int(value)
        numerics[key] = value

    if numerics["poisson_tail"] >= POISSON_TAIL_MAX:
        raise ConfigError(f"numerics.poisson_tail must be below {POISSON_TAIL_MAX}")
    return numerics
