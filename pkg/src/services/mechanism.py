"""
Poisson Mechanism Module

Releases M(g(x)) ~ Poisson(N2 exp(N1 g(x))) calibrated so that every pair of
neighbouring releases is at least as hard to tell apart as Poisson(mu1) from
Poisson(mu2). Covers calibration, seeded releases, verification of the guarantee
on neighbour pairs and the thinning / superposition orderings behind it.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.config import (
    EXP_OVERFLOW_LIMIT,
    POISSON_TAIL,
    SENSITIVITY_TOLERANCE,
    SLACK_TOLERANCE,
    VERIFY_ALPHA_STEP,
)
from ..core.exceptions import (
    CalibrationError,
    DomainError,
    LemmaCheckError,
    NumericRangeError,
    OrderingError,
    VerificationError,
)
from ..utils.validation import validate_neighbor_pairs, validate_numeric_range
from .dist import Kernel, apply_kernel, poisson, sample
from .neyman import curve, poisson_pair
from .tofcurve import (
    TradeoffCurve,
    alpha_grid,
    breakpoints,
    evaluate,
    identity_curve,
    inverse,
    symmetrize,
)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["pair", "min_slack_alpha", "min_slack", "direction", "status"]


@dataclass(frozen=True)
class StatRange:
    """Range of the released statistic g and its sensitivity w_g."""

    g_min: float
    g_max: float
    w_g: float

    def __post_init__(self):
        if not self.w_g > 0:
            raise DomainError(f"Sensitivity w_g must be positive, got {self.w_g}")
        if self.g_max < self.g_min:
            raise DomainError("g_max must be at least g_min")
        if self.bounded and self.w_g > self.g_max - self.g_min:
            raise DomainError(
                f"Sensitivity {self.w_g} exceeds the range width {self.g_max - self.g_min}"
            )

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.g_min) and np.isfinite(self.g_max))


@dataclass(frozen=True)
class PoissonMechanismParams:
    """(mu1, mu2, w_g, w_hg, N1, N2) of a calibrated mechanism."""

    mu1: float
    mu2: float
    w_g: float
    w_hg: float
    n1: float
    n2: float
    g_min: float = -np.inf
    g_max: float = np.inf

    def intensity(self, y: Any) -> Any:
        """lambda(y) = N2 exp(N1 y).

        Raises:
            NumericRangeError: N1 y overflows
        """
        exponent = self.n1 * np.asarray(y, dtype=float)
        if np.any(exponent > EXP_OVERFLOW_LIMIT):
            bad = float(np.max(exponent))
            raise NumericRangeError(f"Intensity exponent {bad:.6g} overflows", value=bad)
        out = self.n2 * np.exp(exponent)
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> Dict[str, float]:
        return {
            "mu1": self.mu1,
            "mu2": self.mu2,
            "w_g": self.w_g,
            "w_hg": self.w_hg,
            "N1": self.n1,
            "N2": self.n2,
            "g_min": self.g_min,
            "g_max": self.g_max,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PoissonMechanismParams":
        params = cls(
            mu1=float(data["mu1"]),
            mu2=float(data["mu2"]),
            w_g=float(data["w_g"]),
            w_hg=float(data["w_hg"]),
            n1=float(data["N1"]),
            n2=float(data["N2"]),
            g_min=float(data.get("g_min", -np.inf)),
            g_max=float(data.get("g_max", np.inf)),
        )
        if not (params.n1 > 0 and params.n2 > 0):
            raise DomainError("N1 and N2 must be positive")
        return params


def calibrate(
    mu1: float, mu2: float, stat_range: StatRange, w_hg: Optional[float] = None
) -> PoissonMechanismParams:
    """
    Calibrate N1 = log(mu2 / mu1) / w_g and N2 = (mu2 - mu1) / w_hg.

    For a bounded range w_hg = h(g_max) - h(g_max - w_g) with h(y) = exp(N1 y), the
    largest neighbouring increment of the increasing convex h.

    Raises:
        OrderingError: mu1 >= mu2
        CalibrationError: unbounded range and no w_hg supplied
    """
    check = validate_numeric_range(mu1, 0.0, np.inf, "mu1", inclusive=False)
    if not check["valid"]:
        raise DomainError(check["message"])
    if not mu2 > mu1:
        raise OrderingError(f"Need mu2 > mu1, got mu1={mu1}, mu2={mu2}")

    n1 = float(np.log(mu2 / mu1) / stat_range.w_g)
    if w_hg is None:
        if not stat_range.bounded:
            raise CalibrationError(
                "Statistic range is unbounded; supply w_hg (the sensitivity of exp(N1 g))"
            )
        top = n1 * stat_range.g_max
        if top > EXP_OVERFLOW_LIMIT:
            raise NumericRangeError(f"exp(N1 g_max) overflows at {top:.6g}", value=top)
        w_hg = float(np.exp(top) - np.exp(n1 * (stat_range.g_max - stat_range.w_g)))
    elif not w_hg > 0:
        raise DomainError(f"w_hg must be positive, got {w_hg}")

    params = PoissonMechanismParams(
        mu1=float(mu1),
        mu2=float(mu2),
        w_g=float(stat_range.w_g),
        w_hg=float(w_hg),
        n1=n1,
        n2=float((mu2 - mu1) / w_hg),
        g_min=float(stat_range.g_min),
        g_max=float(stat_range.g_max),
    )
    logger.info("Calibrated N1=%.6g N2=%.6g", params.n1, params.n2)
    return params


def release_many(
    params: PoissonMechanismParams, g_value: float, seed: int, n: int, tail: float = POISSON_TAIL
) -> np.ndarray:
    """n releases for the same statistic value from one seeded uniform stream."""
    intensity = params.intensity(g_value)
    return sample(poisson(intensity, tail), seed, n).astype(np.int64)


def release(params: PoissonMechanismParams, g_value: float, seed: int) -> int:
    """One release M(g) ~ Poisson(N2 exp(N1 g)) by inverse CDF on the seeded uniform."""
    return int(release_many(params, g_value, seed, 1)[0])


def sufficient_conditions(l1: float, l2: float, m1: float, m2: float) -> Dict[str, bool]:
    """
    Whether (l1, l2) is similarly ordered with (m1, m2), its gap is at most the
    baseline gap and its ratio at most the baseline ratio.
    """
    slack = 1e-12
    similar = (l1 < l2 and m1 < m2) or (l2 < l1 and m2 < m1) or l1 == l2
    gap_ok = abs(l2 - l1) <= abs(m2 - m1) * (1 + slack)
    ratio_ok = max(l1, l2) / min(l1, l2) <= max(m1, m2) / min(m1, m2) * (1 + slack)
    return {
        "similar_ordering": bool(similar),
        "gap": bool(gap_ok),
        "ratio": bool(ratio_ok),
        "holds": bool(similar and gap_ok and ratio_ok),
    }


def min_slack(
    lower: TradeoffCurve, upper: TradeoffCurve, step: float = VERIFY_ALPHA_STEP
) -> Tuple[float, float]:
    """min of upper - lower over a grid refined by both breakpoint sets, and its alpha."""
    extra = np.concatenate([breakpoints(c)[0] for c in (lower, upper)])
    grid = alpha_grid(step, extra)
    slack = evaluate(upper, grid) - evaluate(lower, grid)
    index = int(np.argmin(slack))
    return float(slack[index]), float(grid[index])


def _pair_curve(l1: float, l2: float, tail: float) -> TradeoffCurve:
    if l1 == l2:
        return identity_curve()
    return curve(poisson_pair(l1, l2, tail))


def verify_guarantee(
    params: PoissonMechanismParams,
    neighbor_values: Sequence[Tuple[float, float]],
    slack_tolerance: float = SLACK_TOLERANCE,
    step: float = VERIFY_ALPHA_STEP,
    tail: float = POISSON_TAIL,
    max_workers: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Check T(M(g1), M(g2)) >= f_inf (g2 >= g1) or f_inf^-1 (g2 < g1) on each pair.

    Args:
        params: Calibrated mechanism
        neighbor_values: Pairs (g1, g2) of statistic values on neighbouring datasets
        slack_tolerance: Allowed negative slack

    Returns:
        Dict with 'rows' (DataFrame: pair, min_slack_alpha, min_slack, direction,
        status), the overall 'min_slack' and the 'symmetric_guarantee' curve
        min(f_inf, f_inf^-1)**

    Raises:
        DomainError: a pair differs by more than w_g
        VerificationError: a pair meeting the sufficient conditions fails domination
    """
    check = validate_neighbor_pairs(neighbor_values, params.w_g, SENSITIVITY_TOLERANCE)
    if not check["valid"]:
        raise DomainError(check["message"])

    baseline = curve(poisson_pair(params.mu1, params.mu2, tail))
    baseline_inverse = inverse(baseline)

    def verify_pair(pair: Tuple[float, float]) -> Dict[str, Any]:
        g1, g2 = float(pair[0]), float(pair[1])
        l1, l2 = params.intensity(g1), params.intensity(g2)
        forward = g2 >= g1
        reference = baseline if forward else baseline_inverse
        slack, alpha = min_slack(reference, _pair_curve(l1, l2, tail), step)
        m1, m2 = (params.mu1, params.mu2) if forward else (params.mu2, params.mu1)
        conditions = sufficient_conditions(l1, l2, m1, m2)
        if not conditions["holds"]:
            status = "outside_hypotheses"
        elif slack < -slack_tolerance:
            status = "violated"
        else:
            status = "ok"
        return {
            "pair": [g1, g2],
            "min_slack_alpha": alpha,
            "min_slack": slack,
            "direction": "forward" if forward else "reverse",
            "status": status,
        }

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        rows: List[Dict[str, Any]] = list(pool.map(verify_pair, neighbor_values))

    for row in rows:
        if row["status"] == "outside_hypotheses":
            logger.warning("Pair %s fails the sufficient conditions", row["pair"])
        elif row["status"] == "violated":
            raise VerificationError(
                f"Pair {row['pair']} falls below the guarantee by {-row['min_slack']:.3g} "
                f"at alpha={row['min_slack_alpha']:.6g}",
                pair=tuple(row["pair"]),
                alpha=row["min_slack_alpha"],
            )

    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    logger.info("Verified %d neighbour pairs", len(rows))
    return {
        "rows": frame,
        "min_slack": float(frame["min_slack"].min()),
        "symmetric_guarantee": symmetrize(baseline),
    }


def _total_variation(a, b) -> float:
    labels = np.union1d(a.values, b.values)
    return 0.5 * float(np.abs(a.masses_on(labels) - b.masses_on(labels)).sum())


def kernel_lemma_check(
    lambda1: float,
    lambda2: float,
    c: float,
    lam: float,
    slack_tolerance: float = SLACK_TOLERANCE,
    step: float = VERIFY_ALPHA_STEP,
    tail: float = POISSON_TAIL,
) -> Dict[str, Any]:
    """
    Thinning and superposition orderings of Poisson trade-off curves.

    With T(a, b) = T(Poisson(a), Poisson(b)), 0 < c <= 1 and lam >= 0:
    thin_down  T(l1, l2) <= T(c l1, c l2);
    thin_up    T(l1, l2) >= T(l1 / c, l2 / c);
    superpose  T(l1, l2) <= T(l1 + lam, l2 + lam);
    remove     T(l1, l2) >= T(l1 - lam, l2 - lam), only when both stay positive.

    Also reports the total variation between the kernel realizations and the
    directly built Poisson laws.

    Raises:
        DomainError: parameters outside their domains
        LemmaCheckError: an ordering fails beyond the slack tolerance
    """
    if not (lambda1 > 0 and lambda2 > 0):
        raise DomainError("Rates must be positive")
    if not 0.0 < c <= 1.0:
        raise DomainError(f"Thinning factor must lie in (0, 1], got {c}")
    if lam < 0:
        raise DomainError(f"Superposition rate must be nonnegative, got {lam}")

    base = _pair_curve(lambda1, lambda2, tail)
    checks = [
        ("thin_down", base, (c * lambda1, c * lambda2), "above"),
        ("thin_up", base, (lambda1 / c, lambda2 / c), "below"),
        ("superpose", base, (lambda1 + lam, lambda2 + lam), "above"),
    ]
    if lambda1 - lam > 0 and lambda2 - lam > 0:
        checks.append(("remove", base, (lambda1 - lam, lambda2 - lam), "below"))

    rows = []
    for name, reference, (a, b), side in checks:
        other = _pair_curve(a, b, tail)
        lower, upper = (reference, other) if side == "above" else (other, reference)
        slack, alpha = min_slack(lower, upper, step)
        rows.append({"ordering": name, "rates": [a, b], "min_slack": slack, "alpha": alpha})
        if slack < -slack_tolerance:
            raise LemmaCheckError(
                f"Ordering '{name}' fails by {-slack:.3g} at alpha={alpha:.6g}",
                pair=(a, b),
                alpha=alpha,
            )
    if len(checks) == 3:
        rows.append({"ordering": "remove", "rates": None, "min_slack": None, "alpha": None})

    tv_thinning = _total_variation(
        apply_kernel(Kernel.thin(c), poisson(lambda1, tail)), poisson(c * lambda1, tail)
    )
    tv_superposition = (
        _total_variation(
            apply_kernel(Kernel.superpose(lam), poisson(lambda1, tail)),
            poisson(lambda1 + lam, tail),
        )
        if lam > 0
        else 0.0
    )
    return {
        "rows": rows,
        "min_slack": min(r["min_slack"] for r in rows if r["min_slack"] is not None),
        "tv_thinning": tv_thinning,
        "tv_superposition": tv_superposition,
    }
