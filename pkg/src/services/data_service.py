"""
Data serialization utilities for tradeoff-lab.
Turns curves, distributions and reports into pandas frames, CSV and JSON, and reads
curve CSVs back.
"""

import io
import json
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..core.config import (
    ALPHA_STEP,
    CSV_FLOAT_FORMAT,
    CURVE_CSV_COLUMNS,
    DIST_CSV_COLUMNS,
    PRUNE_THRESHOLD,
)
from ..core.exceptions import UsageError
from ..utils.validation import validate_dataframe
from .dist import DiscreteDist
from .tofcurve import TradeoffCurve, alpha_grid, breakpoints, evaluate, piecewise_curve

PathLike = Union[str, Path]


def curve_to_frame(curve: TradeoffCurve, step: float = ALPHA_STEP) -> pd.DataFrame:
    """
    Tabulate a curve on its breakpoints merged with the uniform alpha grid.

    Args:
        curve: Curve to tabulate
        step: Uniform grid step

    Returns:
        DataFrame with columns alpha, beta sorted by alpha
    """
    grid = alpha_grid(step, breakpoints(curve, step)[0])
    return pd.DataFrame({"alpha": grid, "beta": evaluate(curve, grid)})


def _metadata_lines(metadata: Dict[str, Any]) -> str:
    lines = []
    for key, value in metadata.items():
        if isinstance(value, (bool, np.bool_)):
            lines.append(f"# {key}={str(bool(value)).lower()}")
        elif np.isscalar(value):
            lines.append(f"# {key}={value}")
    return "".join(line + "\n" for line in lines)


def write_curve_csv(
    curve: TradeoffCurve, path: Optional[PathLike] = None, step: float = ALPHA_STEP
) -> str:
    """
    Write alpha,beta rows with full float precision.

    Scalar metadata goes first as '# key=value' comment lines. Writes to stdout
    when no path is given; returns the CSV text either way.
    """
    frame = curve_to_frame(curve, step)
    text = _metadata_lines(curve.metadata) + frame.to_csv(
        index=False, float_format=CSV_FLOAT_FORMAT
    )
    _emit(text, path)
    return text


def _parse_metadata(value: str) -> Any:
    if value in ("true", "false"):
        return value == "true"
    try:
        return float(value)
    except ValueError:
        return value


def read_curve_csv(path: PathLike) -> TradeoffCurve:
    """
    Read an alpha,beta CSV back as a piecewise-linear curve.

    Raises:
        UsageError: missing file, bad columns or a non-numeric cell (with its line)
        CurveError: the points are not a trade-off function
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"Cannot read curve file {path}: {e}") from e

    metadata: Dict[str, Any] = {}
    comment_lines = 0
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        comment_lines += 1
        key, _, value = line[1:].strip().partition("=")
        if key:
            metadata[key] = _parse_metadata(value)

    try:
        frame = pd.read_csv(io.StringIO(text), comment="#")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise UsageError(f"{path}: {e}") from e

    # header plus comment lines precede the first data row
    check = validate_dataframe(frame, CURVE_CSV_COLUMNS, first_line=comment_lines + 2)
    if not check["valid"]:
        raise UsageError(f"{path}: {check['message']}")

    numeric = frame[CURVE_CSV_COLUMNS].apply(pd.to_numeric).sort_values("alpha")
    return piecewise_curve(
        numeric["alpha"].to_numpy(),
        numeric["beta"].to_numpy(),
        metadata={**metadata, "path": str(path)},
    )


def dist_to_frame(d: DiscreteDist) -> pd.DataFrame:
    return pd.DataFrame({"value": d.values, "mass": d.masses}, columns=DIST_CSV_COLUMNS)


def write_dist_csv(d: DiscreteDist, path: Optional[PathLike] = None) -> str:
    text = dist_to_frame(d).to_csv(index=False, float_format=CSV_FLOAT_FORMAT)
    _emit(text, path)
    return text


def dist_envelope(d: DiscreteDist, prune_threshold: float = PRUNE_THRESHOLD) -> Dict[str, Any]:
    """JSON summary of a distribution: atom count, truncation deficit and prune level."""
    return {
        "atoms": d.size,
        "total_mass": d.total_mass,
        "deficit": d.deficit,
        "prune_threshold": prune_threshold,
        "metadata": {k: v for k, v in d.metadata.items() if np.isscalar(v)},
    }


def to_jsonable(value: Any) -> Any:
    """Plain JSON types for numpy scalars and arrays, frames, curves and tuples."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, pd.DataFrame):
        return [to_jsonable(row) for row in value.to_dict(orient="records")]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, TradeoffCurve):
        return value.describe()
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        number = float(value)
        if np.isnan(number):
            return None
        if np.isinf(number):
            return "inf" if number > 0 else "-inf"
        return number
    return value


def write_json_report(payload: Dict[str, Any], path: Optional[PathLike] = None) -> str:
    """Write a UTF-8 JSON report to path, or to stdout when no path is given."""
    text = json.dumps(to_jsonable(payload), indent=2, ensure_ascii=False) + "\n"
    _emit(text, path)
    return text


def _emit(text: str, path: Optional[PathLike]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise UsageError(f"Cannot write {path}: {e}") from e


def split_report_paths(out: Optional[PathLike]) -> Tuple[Optional[Path], Optional[Path]]:
    """CSV path and its sibling JSON report path ('curve.csv' -> 'curve.json')."""
    if out is None:
        return None, None
    csv_path = Path(out)
    return csv_path, csv_path.with_suffix(".json")
