"""
Trade-off Curve Module

The trade-off function value type T(P, Q): alpha -> minimal type II error at type I
error alpha. Curves are piecewise-linear on explicit breakpoints or tagged closed
forms (Gaussian G_mu, (epsilon, delta)) kept symbolic until an operation needs
breakpoints. Provides evaluation, generalized inverse, symmetrization by the double
convex conjugate, Bayes-risk and (epsilon, delta) dualities, and distances.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional, Tuple, Union

import numpy as np
from scipy import stats

from ..core.config import (
    ALPHA_STEP,
    CURVE_TOLERANCE,
    LEVY_BISECTION_STEPS,
    SYMMETRY_TOLERANCE,
    TAIL_REFINEMENT,
)
from ..core.exceptions import ContractError, CurveError, DomainError
from ..utils.validation import validate_tradeoff_points

logger = logging.getLogger(__name__)

PIECEWISE = "piecewise"
GAUSSIAN = "gaussian"
EPS_DELTA = "eps_delta"

ArrayLike = Union[float, np.ndarray, Iterable[float]]


def _dedupe(alphas: np.ndarray, betas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sort by alpha and keep the smallest beta at repeated alphas."""
    order = np.lexsort((betas, alphas))
    alphas, betas = alphas[order], betas[order]
    _, first = np.unique(alphas, return_index=True)
    return alphas[first], betas[first]


@dataclass(frozen=True, eq=False)
class TradeoffCurve:
    """
    A trade-off function on [0, 1].

    `source` optionally holds an experiment pair realizing the curve, which lets
    piecewise curves enter tensor products without a reconstruction step.
    """

    form: str
    alphas: Optional[np.ndarray] = None
    betas: Optional[np.ndarray] = None
    mu: Optional[float] = None
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    source: Any = None

    def __post_init__(self):
        if self.form == PIECEWISE:
            if self.alphas is None or self.betas is None:
                raise CurveError("Piecewise curve needs alphas and betas")
            alphas, betas = _dedupe(
                np.asarray(self.alphas, dtype=float), np.asarray(self.betas, dtype=float)
            )
            check = validate_tradeoff_points(alphas, betas, CURVE_TOLERANCE)
            if not check["valid"]:
                raise CurveError(check["message"])
            betas = np.minimum(np.clip(betas, 0.0, 1.0), 1.0 - alphas)
            alphas.setflags(write=False)
            betas.setflags(write=False)
            object.__setattr__(self, "alphas", alphas)
            object.__setattr__(self, "betas", betas)
        elif self.form == GAUSSIAN:
            if self.mu is None or not self.mu >= 0 or not np.isfinite(self.mu):
                raise DomainError(f"Gaussian curve needs finite mu >= 0, got {self.mu}")
        elif self.form == EPS_DELTA:
            if self.epsilon is None or not self.epsilon >= 0 or not np.isfinite(self.epsilon):
                raise DomainError(f"epsilon must be finite and >= 0, got {self.epsilon}")
            if self.delta is None or not 0.0 <= self.delta <= 1.0:
                raise DomainError(f"delta must lie in [0, 1], got {self.delta}")
        else:
            raise CurveError(f"Unknown curve form '{self.form}'")

    def __call__(self, alpha: ArrayLike) -> Union[float, np.ndarray]:
        return evaluate(self, alpha)

    def describe(self) -> Dict[str, Any]:
        """JSON-ready form tag and parameters."""
        info: Dict[str, Any] = {"form": self.form}
        if self.form == GAUSSIAN:
            info["mu"] = self.mu
        elif self.form == EPS_DELTA:
            info.update(epsilon=self.epsilon, delta=self.delta)
        else:
            info["breakpoints"] = int(self.alphas.size)
        info.update({k: v for k, v in self.metadata.items() if np.isscalar(v)})
        return info


def identity_curve() -> TradeoffCurve:
    """I(alpha) = 1 - alpha, the curve of two identical distributions."""
    return eps_delta_curve(0.0, 0.0)


def gaussian_curve(mu: float) -> TradeoffCurve:
    return TradeoffCurve(form=GAUSSIAN, mu=float(mu))


def eps_delta_curve(epsilon: float, delta: float) -> TradeoffCurve:
    return TradeoffCurve(form=EPS_DELTA, epsilon=float(epsilon), delta=float(delta))


def piecewise_curve(
    alphas: ArrayLike,
    betas: ArrayLike,
    metadata: Optional[Dict[str, Any]] = None,
    source: Any = None,
) -> TradeoffCurve:
    """
    Piecewise-linear curve through the given breakpoints.

    Raises:
        CurveError: the breakpoints fail the trade-off certificate
    """
    return TradeoffCurve(
        form=PIECEWISE,
        alphas=np.asarray(alphas, dtype=float),
        betas=np.asarray(betas, dtype=float),
        metadata=dict(metadata or {}),
        source=source,
    )


def alpha_grid(step: float = ALPHA_STEP, extra: Iterable[float] = ()) -> np.ndarray:
    """Uniform grid on [0, 1], the extra points, and geometric refinement at both ends."""
    count = int(round(1.0 / step))
    tail = np.geomspace(TAIL_REFINEMENT["smallest"], step, TAIL_REFINEMENT["points"])
    points = np.concatenate(
        (np.linspace(0.0, 1.0, count + 1), tail, 1.0 - tail, np.fromiter(extra, dtype=float))
    )
    return np.unique(np.clip(points, 0.0, 1.0))


def _eps_delta_breakpoints(epsilon: float, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    kink = (1.0 - delta) / (1.0 + np.exp(epsilon))
    alphas = np.array([0.0, kink, 1.0 - delta, 1.0])
    betas = np.array([1.0 - delta, kink, 0.0, 0.0])
    return _dedupe(alphas, betas)


def to_piecewise(f: TradeoffCurve, step: float = ALPHA_STEP) -> TradeoffCurve:
    """
    Breakpoint form of a curve.

    (epsilon, delta) curves convert exactly; Gaussian curves are sampled on
    `alpha_grid(step)` and the step is recorded in the metadata.
    """
    if f.form == PIECEWISE:
        return f
    if f.form == EPS_DELTA:
        alphas, betas = _eps_delta_breakpoints(f.epsilon, f.delta)
        return piecewise_curve(alphas, betas, metadata={**f.metadata, "converted_from": EPS_DELTA})

    grid = alpha_grid(step)
    return piecewise_curve(
        grid,
        evaluate(f, grid),
        metadata={**f.metadata, "converted_from": GAUSSIAN, "mu": f.mu, "step": step},
    )


def breakpoints(f: TradeoffCurve, step: float = ALPHA_STEP) -> Tuple[np.ndarray, np.ndarray]:
    pl = to_piecewise(f, step)
    return pl.alphas, pl.betas


def segment_slopes(f: TradeoffCurve) -> np.ndarray:
    """Slopes of the segments of a piecewise curve, nondecreasing by convexity."""
    alphas, betas = breakpoints(f)
    return np.diff(betas) / np.diff(alphas)


def evaluate(f: TradeoffCurve, alpha: ArrayLike) -> Union[float, np.ndarray]:
    """
    Evaluate f at alpha.

    Args:
        f: Curve to evaluate
        alpha: Scalar or array of type I errors in [0, 1]

    Returns:
        f(alpha), a float for scalar input

    Raises:
        DomainError: alpha outside [0, 1]
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(~((a >= 0.0) & (a <= 1.0))):
        raise DomainError("alpha must lie in [0, 1]")

    if f.form == PIECEWISE:
        out = np.interp(a, f.alphas, f.betas)
    elif f.form == GAUSSIAN:
        out = stats.norm.cdf(stats.norm.isf(a) - f.mu)
    else:
        scale = np.exp(f.epsilon)
        out = np.maximum.reduce(
            [np.zeros_like(a), 1.0 - f.delta - scale * a, (1.0 - f.delta - a) / scale]
        )
    return float(out) if out.ndim == 0 else out


def inverse(f: TradeoffCurve) -> TradeoffCurve:
    """
    Generalized inverse f^-1(alpha) = inf{t : f(t) <= alpha}, i.e. T(Q, P).

    Gaussian and (epsilon, delta) curves are their own inverses.
    """
    if f.form != PIECEWISE:
        return f

    alphas = f.betas[::-1]
    betas = f.alphas[::-1]
    if alphas[-1] < 1.0:
        # drop at zero turns into a flat zero tail
        alphas = np.append(alphas, 1.0)
        betas = np.append(betas, 0.0)
    source = f.source.swapped() if hasattr(f.source, "swapped") else None
    return piecewise_curve(alphas, betas, metadata=f.metadata, source=source)


def lower_convex_hull(alphas: np.ndarray, betas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vertices of the lower convex hull of a point set (monotone chain)."""
    alphas, betas = _dedupe(np.asarray(alphas, dtype=float), np.asarray(betas, dtype=float))
    hull = []
    for point in zip(alphas, betas):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            cross = (x2 - x1) * (point[1] - y1) - (y2 - y1) * (point[0] - x1)
            if cross > 0:
                break
            hull.pop()
        hull.append(point)
    vertices = np.array(hull)
    return vertices[:, 0], vertices[:, 1]


def sup_distance(f: TradeoffCurve, g: TradeoffCurve, step: float = ALPHA_STEP) -> float:
    """sup |f - g| over a grid refined by both curves' breakpoints (exact for piecewise pairs)."""
    extra = []
    for curve in (f, g):
        if curve.form != GAUSSIAN:
            extra.append(breakpoints(curve)[0])
    grid = alpha_grid(step, np.concatenate(extra) if extra else ())
    return float(np.max(np.abs(evaluate(f, grid) - evaluate(g, grid))))


def is_symmetric(f: TradeoffCurve, tolerance: float = SYMMETRY_TOLERANCE) -> bool:
    if f.form != PIECEWISE:
        return True
    return sup_distance(f, inverse(f)) <= tolerance


def _symmetric_envelope(f: TradeoffCurve) -> TradeoffCurve:
    finv = inverse(f)
    alphas, betas = lower_convex_hull(
        np.concatenate((f.alphas, finv.alphas)), np.concatenate((f.betas, finv.betas))
    )
    return piecewise_curve(alphas, betas, metadata={**f.metadata, "symmetrized": True})


def _three_piece(f: TradeoffCurve) -> TradeoffCurve:
    finv = inverse(f)
    slopes = segment_slopes(f)
    first = int(np.searchsorted(slopes, -1.0, side="left"))
    x_bar = float(f.alphas[min(first, f.alphas.size - 1)])
    y_bar = float(evaluate(f, x_bar))

    if x_bar <= y_bar:
        lead, trail = f, finv
        lo, hi = x_bar, y_bar
    else:
        lead, trail = finv, f
        lo, hi = y_bar, x_bar

    head = lead.alphas < lo
    tail = trail.alphas > hi
    alphas = np.concatenate((lead.alphas[head], [lo, hi], trail.alphas[tail]))
    betas = np.concatenate((lead.betas[head], [hi, lo], trail.betas[tail]))
    return piecewise_curve(
        alphas, betas, metadata={**f.metadata, "symmetrized": True, "x_bar": x_bar}
    )


def symmetrize(f: TradeoffCurve) -> TradeoffCurve:
    """
    min(f, f^-1)**, the largest symmetric trade-off function below f and f^-1.

    Built from the three-piece description around x_bar = inf{x : -1 in df(x)}: f up
    to x_bar, a slope -1 bridge, then f^-1 (mirrored when x_bar > f(x_bar)). When
    that construction is not the convex envelope of min(f, f^-1) the envelope is
    returned instead.
    """
    if f.form != PIECEWISE or is_symmetric(f):
        return f

    envelope = _symmetric_envelope(f)
    try:
        candidate = _three_piece(f)
    except CurveError as exc:
        logger.warning("Three-piece symmetrization invalid (%s); using convex envelope", exc)
        return envelope

    gap = sup_distance(candidate, envelope)
    if gap > SYMMETRY_TOLERANCE:
        logger.warning(
            "Three-piece symmetrization off the convex envelope by %.3g; using envelope", gap
        )
        return envelope
    return candidate


def blackwell_compare(
    f: TradeoffCurve, g: TradeoffCurve, tolerance: float = CURVE_TOLERANCE
) -> Dict[str, Any]:
    """
    Pointwise (Blackwell) comparison of two curves.

    Returns:
        Dict with 'relation' (equal, f_above, g_above, incomparable), both
        domination flags and the alpha where each domination fails worst
    """
    extra = [breakpoints(c)[0] for c in (f, g) if c.form != GAUSSIAN]
    grid = alpha_grid(ALPHA_STEP, np.concatenate(extra) if extra else ())
    diff = evaluate(f, grid) - evaluate(g, grid)

    f_above = bool(diff.min() >= -tolerance)
    g_above = bool(diff.max() <= tolerance)
    if f_above and g_above:
        relation = "equal"
    elif f_above:
        relation = "f_above"
    elif g_above:
        relation = "g_above"
    else:
        relation = "incomparable"
    return {
        "relation": relation,
        "f_dominates_g": f_above,
        "g_dominates_f": g_above,
        "f_below_at": float(grid[np.argmin(diff)]),
        "g_below_at": float(grid[np.argmax(diff)]),
        "max_gap": float(np.abs(diff).max()),
    }


@dataclass(frozen=True, eq=False)
class BayesRisk:
    """Minimum Bayes risk b(lambda) on a grid of prior weights lambda in [0, 1]."""

    lambdas: np.ndarray
    risks: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __call__(self, lam: ArrayLike) -> Union[float, np.ndarray]:
        out = np.interp(np.asarray(lam, dtype=float), self.lambdas, self.risks)
        return float(out) if out.ndim == 0 else out


def bayes_lambda_grid(f: TradeoffCurve, step: float = ALPHA_STEP) -> np.ndarray:
    """Uniform lambda grid plus the priors at which the minimizing breakpoint changes."""
    grid = alpha_grid(step)
    if f.form == GAUSSIAN:
        return grid
    slopes = segment_slopes(f)
    kinks = 1.0 / (1.0 + np.abs(slopes[np.isfinite(slopes)]))
    return np.unique(np.concatenate((grid, kinks)))


def to_bayes_risk(
    f: TradeoffCurve, lambdas: Optional[np.ndarray] = None, step: float = ALPHA_STEP
) -> BayesRisk:
    """
    b(lambda) = inf_alpha [(1 - lambda) alpha + lambda f(alpha)].

    Exact for piecewise curves (the infimum sits on a breakpoint); closed form for
    Gaussian curves.
    """
    lam = bayes_lambda_grid(f, step) if lambdas is None else np.asarray(lambdas, dtype=float)

    if f.form == GAUSSIAN:
        if f.mu == 0:
            risks = np.minimum(lam, 1.0 - lam)
        else:
            with np.errstate(divide="ignore"):
                z = (np.log1p(-lam) - np.log(lam) + f.mu**2 / 2.0) / f.mu
            risks = (1.0 - lam) * stats.norm.cdf(-z) + lam * stats.norm.cdf(z - f.mu)
        return BayesRisk(lam, risks, metadata={"form": GAUSSIAN, "mu": f.mu})

    alphas, betas = breakpoints(f)
    slopes = np.diff(betas) / np.diff(alphas)
    with np.errstate(divide="ignore"):
        threshold = np.where(lam > 0, -(1.0 - lam) / np.where(lam > 0, lam, 1.0), -np.inf)
    index = np.searchsorted(slopes, threshold, side="left")
    risks = (1.0 - lam) * alphas[index] + lam * betas[index]
    return BayesRisk(lam, risks, metadata={"form": f.form})


def from_bayes_risk(
    b: BayesRisk, alphas: Optional[np.ndarray] = None, chunk: int = 512
) -> TradeoffCurve:
    """
    f(alpha) = sup over lambda in (0, 1] of (b(lambda) - (1 - lambda) alpha) / lambda.

    Evaluated on `alphas` (default: the standard alpha grid), clipped to [0, 1 - alpha].
    """
    grid = alpha_grid() if alphas is None else np.unique(np.concatenate(([0.0, 1.0], alphas)))
    positive = b.lambdas > 0
    lam, risk = b.lambdas[positive], b.risks[positive]

    values = np.empty(grid.size)
    for start in range(0, grid.size, chunk):
        block = grid[start : start + chunk]
        lines = (risk[None, :] - (1.0 - lam)[None, :] * block[:, None]) / lam[None, :]
        values[start : start + chunk] = lines.max(axis=1)
    values = np.minimum(np.clip(values, 0.0, None), 1.0 - grid)

    alphas_hull, betas_hull = lower_convex_hull(grid, values)
    return piecewise_curve(alphas_hull, betas_hull, metadata={"from_bayes_risk": True})


def to_eps_delta(f: TradeoffCurve, epsilon: ArrayLike) -> Union[float, np.ndarray]:
    """
    delta(epsilon) = 1 + f*(-e^epsilon), the tightest (epsilon, delta) pair implied by f.

    Raises:
        DomainError: epsilon < 0
        ContractError: f is not symmetric
    """
    eps = np.asarray(epsilon, dtype=float)
    if np.any(~(eps >= 0)):
        raise DomainError("epsilon must be nonnegative")
    if not is_symmetric(f):
        raise ContractError("to_eps_delta needs a symmetric curve; call symmetrize(f) first")

    if f.form == GAUSSIAN:
        if f.mu == 0:
            delta = np.zeros_like(eps)
        else:
            delta = stats.norm.cdf(-eps / f.mu + f.mu / 2.0) - np.exp(eps) * stats.norm.cdf(
                -eps / f.mu - f.mu / 2.0
            )
    else:
        alphas, betas = breakpoints(f)
        scale = np.exp(eps)[..., None]
        delta = 1.0 - np.min(scale * alphas + betas, axis=-1)
    delta = np.clip(delta, 0.0, 1.0)
    return float(delta) if delta.ndim == 0 else delta


def _curve_cdf(f: TradeoffCurve, x: np.ndarray) -> np.ndarray:
    """Distribution function 1 - f on [0, 1), 0 below 0 and 1 from 1 on."""
    out = np.zeros_like(x)
    inside = (x >= 0.0) & (x < 1.0)
    out[inside] = 1.0 - evaluate(f, x[inside])
    out[x >= 1.0] = 1.0
    return out


def levy_distance(f: TradeoffCurve, g: TradeoffCurve, step: float = ALPHA_STEP) -> float:
    """
    Levy distance between the distribution functions 1 - f and 1 - g.

    Bisection on [0, sup_distance]; the Levy condition is checked on the shared grid
    and its shifts by the candidate distance, which is exact for piecewise curves.
    """
    upper = sup_distance(f, g, step)
    if upper == 0.0:
        return 0.0

    extra = [breakpoints(c)[0] for c in (f, g) if c.form != GAUSSIAN]
    grid = alpha_grid(step, np.concatenate(extra) if extra else ())

    def holds(eps: float) -> bool:
        x = np.concatenate((grid, grid - eps, grid + eps))
        F, G = _curve_cdf(f, x), _curve_cdf(g, x)
        F_up, G_up = _curve_cdf(f, x + eps), _curve_cdf(g, x + eps)
        return bool(np.all(G <= F_up + eps + 1e-15) and np.all(F <= G_up + eps + 1e-15))

    lo, hi = 0.0, upper
    for _ in range(LEVY_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    logger.debug("Levy distance %.6g (sup distance %.6g)", hi, upper)
    return hi
