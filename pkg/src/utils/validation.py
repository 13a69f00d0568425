"""
Input validation utilities for tradeoff-lab.
Provides validation functions for user inputs and numerical integrity checks.

Every validator returns a dict with 'valid' boolean and 'message' string and never
raises; services turn an invalid result into the matching exception.
"""

import math
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd

# Fields required by each pair kind accepted in spec files
PAIR_SPEC_FIELDS = {
    "poisson": ["lambda1", "lambda2"],
    "bernoulli": ["p", "q"],
    "binomial": ["n", "p", "q"],
    "gaussian": ["mu"],
    "shift": ["family", "mu"],
    "discrete": ["P", "Q"],
}


def validate_numeric_range(
    value: Any,
    min_val: float,
    max_val: float,
    field_name: str,
    inclusive: bool = True,
) -> Dict[str, Any]:
    """
    Validate that a numeric value lies within [min_val, max_val].

    With inclusive=False the bounds themselves are rejected.

    Returns:
        Dict with 'valid' boolean and 'message' string
    """
    if isinstance(value, bool):
        return {"valid": False, "message": f"{field_name} must be a number"}
    try:
        value = float(value)
    except (TypeError, ValueError):
        return {"valid": False, "message": f"{field_name} must be a number"}

    if math.isnan(value):
        return {"valid": False, "message": f"{field_name} must not be NaN"}

    below = value < min_val if inclusive else value <= min_val
    above = value > max_val if inclusive else value >= max_val
    bound = "at least" if inclusive else "greater than"
    if below:
        return {"valid": False, "message": f"{field_name} must be {bound} {min_val}"}
    bound = "at most" if inclusive else "less than"
    if above:
        return {"valid": False, "message": f"{field_name} must be {bound} {max_val}"}

    return {"valid": True, "message": f"Valid {field_name}"}


def validate_dataframe(
    df: pd.DataFrame, required_columns: List[str], first_line: int = 2
) -> Dict[str, Any]:
    """
    Validate that a DataFrame has the required numeric, finite columns.

    first_line is the file line of the first data row, used in error messages.

    Returns:
        Dict with 'valid' boolean and 'message' string
    """
    if df is None:
        return {"valid": False, "message": "DataFrame cannot be None"}

    if not isinstance(df, pd.DataFrame):
        return {"valid": False, "message": "Input must be a pandas DataFrame"}

    if df.empty:
        return {"valid": False, "message": "DataFrame cannot be empty"}

    missing_columns = [col for col in required_columns if col not in df.columns]
    if missing_columns:
        return {
            "valid": False,
            "message": f"Missing required columns: {', '.join(missing_columns)}",
        }

    for col in required_columns:
        numeric = pd.to_numeric(df[col], errors="coerce")
        bad_rows = numeric.index[~np.isfinite(numeric.to_numpy(dtype=float))]
        if len(bad_rows) > 0:
            line = bad_rows[0] + first_line
            return {
                "valid": False,
                "message": f"Non-numeric value in column '{col}' at line {line}",
            }

    return {"valid": True, "message": "Valid DataFrame"}


def validate_probability_masses(
    values: np.ndarray, masses: np.ndarray, deficit: float, tolerance: float
) -> Dict[str, Any]:
    """
    Validate atoms of a discrete distribution.

    Checks: equal lengths, finite strictly increasing values, nonnegative masses and
    total mass plus recorded deficit equal to one within tolerance.

    Returns:
        Dict with 'valid' boolean and 'message' string
    """
    if values.shape != masses.shape or values.ndim != 1:
        return {"valid": False, "message": "values and masses must be 1-D of equal length"}

    if values.size == 0:
        return {"valid": False, "message": "Distribution has no atoms"}

    if not np.all(np.isfinite(values)):
        return {"valid": False, "message": "Atom values must be finite"}

    if np.any(np.diff(values) <= 0):
        return {"valid": False, "message": "Atom values must be strictly increasing"}

    if np.any(masses < 0):
        return {"valid": False, "message": "Atom masses must be nonnegative"}

    total = float(masses.sum()) + deficit
    if abs(total - 1.0) > tolerance:
        return {
            "valid": False,
            "message": f"Total mass {total:.17g} differs from 1 by more than {tolerance}",
        }

    return {"valid": True, "message": "Valid distribution"}


def validate_tradeoff_points(
    alphas: np.ndarray, betas: np.ndarray, tolerance: float
) -> Dict[str, Any]:
    """
    Certificate for the class of trade-off functions on piecewise-linear breakpoints.

    Checks: alpha spans [0, 1] increasing, beta in [0, 1] nonincreasing,
    beta <= 1 - alpha and every breakpoint on or below the chord of its neighbours
    (convexity).

    Returns:
        Dict with 'valid' boolean and 'message' string
    """
    if alphas.shape != betas.shape or alphas.size < 2:
        return {"valid": False, "message": "Need at least two breakpoints"}

    if alphas[0] != 0.0 or alphas[-1] != 1.0:
        return {"valid": False, "message": "Breakpoints must start at 0 and end at 1"}

    if np.any(np.diff(alphas) <= 0):
        return {"valid": False, "message": "Alphas must be strictly increasing"}

    if np.any(betas < -tolerance) or np.any(betas > 1 + tolerance):
        return {"valid": False, "message": "Betas must lie in [0, 1]"}

    if np.any(np.diff(betas) > tolerance):
        index = int(np.argmax(np.diff(betas) > tolerance))
        return {"valid": False, "message": f"Curve increases after alpha={alphas[index]:.6g}"}

    excess = betas - (1.0 - alphas)
    if np.any(excess > tolerance):
        index = int(np.argmax(excess))
        return {
            "valid": False,
            "message": f"beta exceeds 1 - alpha at alpha={alphas[index]:.6g}",
        }

    if alphas.size > 2:
        left_a, mid_a, right_a = alphas[:-2], alphas[1:-1], alphas[2:]
        left_b, mid_b, right_b = betas[:-2], betas[1:-1], betas[2:]
        weight = (mid_a - left_a) / (right_a - left_a)
        chord = left_b + weight * (right_b - left_b)
        violation = mid_b - chord
        if np.any(violation > tolerance):
            index = int(np.argmax(violation)) + 1
            return {
                "valid": False,
                "message": f"Curve is not convex at alpha={alphas[index]:.6g}",
            }

    return {"valid": True, "message": "Valid trade-off curve"}


def validate_pair_spec(spec: Dict[str, Any]) -> Dict[str, Any]:
    """
    Validate an experiment-pair spec object from a JSON spec file.

    Returns:
        Dict with 'valid' boolean and 'message' string
    """
    if not isinstance(spec, dict):
        return {"valid": False, "message": "Pair spec must be a JSON object"}

    kind = spec.get("kind")
    if kind not in PAIR_SPEC_FIELDS:
        return {
            "valid": False,
            "message": f"Field 'kind' must be one of: {', '.join(PAIR_SPEC_FIELDS)}",
        }

    missing = [name for name in PAIR_SPEC_FIELDS[kind] if name not in spec]
    if missing:
        return {
            "valid": False,
            "message": f"Pair kind '{kind}' is missing fields: {', '.join(missing)}",
        }

    if kind == "poisson":
        for name in ("lambda1", "lambda2"):
            check = validate_numeric_range(spec[name], 0.0, math.inf, name, inclusive=False)
            if not check["valid"]:
                return check
    elif kind in ("bernoulli", "binomial"):
        for name in ("p", "q"):
            check = validate_numeric_range(spec[name], 0.0, 1.0, name)
            if not check["valid"]:
                return check
        if kind == "binomial" and (not isinstance(spec["n"], int) or spec["n"] < 1):
            return {"valid": False, "message": "Field 'n' must be a positive integer"}
    elif kind == "shift" and spec["family"] not in ("gaussian", "laplace"):
        return {"valid": False, "message": "Field 'family' must be gaussian or laplace"}
    elif kind == "discrete":
        for name in ("P", "Q"):
            atoms = spec[name]
            if not isinstance(atoms, dict) or not {"values", "masses"} <= set(atoms):
                return {
                    "valid": False,
                    "message": f"Field '{name}' needs 'values' and 'masses' lists",
                }
            if len(atoms["values"]) != len(atoms["masses"]):
                return {
                    "valid": False,
                    "message": f"Field '{name}' has {len(atoms['values'])} values "
                    f"but {len(atoms['masses'])} masses",
                }

    return {"valid": True, "message": "Valid pair spec"}


def validate_mixture_components(
    weights: Sequence[float], times: Sequence[float], tolerance: float
) -> Dict[str, Any]:
    """
    Validate mixture weights (nonnegative, summing to one) and strictly increasing
    positive times.

    Returns:
        Dict with 'valid' boolean and 'message' string
    """
    if len(weights) == 0 or len(weights) != len(times):
        return {"valid": False, "message": "Need one weight per time and at least one"}

    if any(w < 0 for w in weights):
        return {"valid": False, "message": "Mixture weights must be nonnegative"}

    if abs(sum(weights) - 1.0) > tolerance:
        return {"valid": False, "message": f"Mixture weights sum to {sum(weights)}, not 1"}

    if any(t <= 0 for t in times):
        return {"valid": False, "message": "Mixture times must be positive"}

    if any(b <= a for a, b in zip(times, times[1:])):
        return {"valid": False, "message": "Mixture times must be strictly increasing"}

    return {"valid": True, "message": "Valid mixture components"}


def validate_neighbor_pairs(
    pairs: Sequence[Sequence[float]], w_g: float, tolerance: float = 0.0
) -> Dict[str, Any]:
    """
    Validate neighbouring statistic values: each a pair within sensitivity w_g.

    `tolerance` is the relative slack on w_g allowed for float round-off.

    Returns:
        Dict with 'valid' boolean and 'message' string
    """
    if not pairs:
        return {"valid": False, "message": "Need at least one neighbour pair"}

    for index, pair in enumerate(pairs):
        if len(pair) != 2:
            return {"valid": False, "message": f"Neighbour entry {index} is not a pair"}
        g1, g2 = float(pair[0]), float(pair[1])
        if not (math.isfinite(g1) and math.isfinite(g2)):
            return {"valid": False, "message": f"Neighbour entry {index} is not finite"}
        if abs(g1 - g2) > w_g * (1 + tolerance):
            return {
                "valid": False,
                "message": f"Neighbour entry {index} differs by {abs(g1 - g2)} > w_g={w_g}",
            }

    return {"valid": True, "message": "Valid neighbour pairs"}
