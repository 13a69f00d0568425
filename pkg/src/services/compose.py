"""
Composition Module

Tensor products of trade-off functions. Gaussian curves compose symbolically
(G_a x G_b = G_sqrt(a^2 + b^2)); everything else composes through its
log-likelihood-ratio law, whose convolution under P is the LLR law of the product
experiment. Also the CLT limit comparator, convergence reports and the
large-deviation rate of f^(x)n.
"""

import logging
from typing import Any, Callable, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from scipy import signal, stats

from ..core.config import (
    CONVOLUTION_ATOM_CAP,
    EXACT_PRODUCT_LIMIT,
    PRUNE_THRESHOLD,
)
from ..core.exceptions import ContractError, DomainError
from .neyman import (
    ExperimentPair,
    LLRDist,
    curve,
    curve_from_llr,
    discretize_pair,
    gaussian_pair,
    llr,
    moment_functionals,
    realize_pair,
)
from .tofcurve import (
    EPS_DELTA,
    GAUSSIAN,
    TradeoffCurve,
    breakpoints,
    evaluate,
    gaussian_curve,
    identity_curve,
    inverse,
    levy_distance,
    sup_distance,
    to_piecewise,
)

logger = logging.getLogger(__name__)

Operand = Union[TradeoffCurve, ExperimentPair]


def _absorb_deficits(d: LLRDist) -> Tuple[np.ndarray, np.ndarray, float, float]:
    """Finite atoms with the truncation deficit folded in as one more atom.

    Returns values, P-masses, P-mass at -inf and Q-mass at +inf.
    """
    values, masses = d.values, d.masses
    minus_inf, plus_inf = d.minus_inf_mass, d.plus_inf_mass
    if d.p_deficit > 0 and d.q_deficit > 0:
        values = np.append(values, np.log(d.q_deficit / d.p_deficit))
        masses = np.append(masses, d.p_deficit)
    elif d.p_deficit > 0:
        minus_inf += d.p_deficit
    elif d.q_deficit > 0:
        plus_inf += d.q_deficit
    return values, masses, minus_inf, plus_inf


def _conditional_values(
    index: np.ndarray, values: np.ndarray, masses: np.ndarray, bins: int
) -> Tuple[np.ndarray, np.ndarray]:
    """P-mass and Q-mass per bin for atoms assigned to bin `index`."""
    p_bins = np.bincount(index, weights=masses, minlength=bins)
    q_bins = np.bincount(index, weights=np.exp(values) * masses, minlength=bins)
    return p_bins, q_bins


def rebin_llr(d: LLRDist, cap: int = CONVOLUTION_ATOM_CAP) -> LLRDist:
    """
    Coarsen an LLR law onto at most `cap` uniform bins.

    Each bin keeps its total P-mass and sits at its conditional log-likelihood
    ratio log(Q(bin) / P(bin)), so the tilt normalizer is unchanged and the curve
    can only move up.
    """
    if d.values.size <= cap:
        return d
    lo, hi = d.values[0], d.values[-1]
    width = (hi - lo) / (cap - 1)
    index = np.minimum(((d.values - lo) / width).astype(np.int64), cap - 1)
    p_bins, q_bins = _conditional_values(index, d.values, d.masses, cap)
    occupied = p_bins > 0
    logger.debug("Rebinned %d LLR atoms to width %.3g", d.values.size, width)
    return LLRDist.from_atoms(
        np.log(q_bins[occupied]) - np.log(p_bins[occupied]),
        p_bins[occupied],
        minus_inf_mass=d.minus_inf_mass,
        plus_inf_mass=d.plus_inf_mass,
        p_deficit=d.p_deficit,
        q_deficit=d.q_deficit,
        prune=0.0,
        metadata={**d.metadata, "rebin_width": width},
    )


def _fft_convolve(
    a: Tuple[np.ndarray, np.ndarray], b: Tuple[np.ndarray, np.ndarray], cap: int
) -> Tuple[np.ndarray, np.ndarray, float, float, float]:
    """Bin both laws on one grid width and convolve the P and Q bin masses by FFT.

    Returns values, P-masses and the P- and Q-mass lost under the noise floor, plus
    the bin width.
    """
    (va, ma), (vb, mb) = a, b
    span = (va[-1] - va[0]) + (vb[-1] - vb[0])
    width = max(span / (cap - 2), np.finfo(float).eps)
    na = int((va[-1] - va[0]) / width) + 1
    nb = int((vb[-1] - vb[0]) / width) + 1
    index_a = np.clip(((va - va[0]) / width).astype(np.int64), 0, na - 1)
    index_b = np.clip(((vb - vb[0]) / width).astype(np.int64), 0, nb - 1)
    pa, qa = _conditional_values(index_a, va, ma, na)
    pb, qb = _conditional_values(index_b, vb, mb, nb)

    p_conv = np.clip(signal.fftconvolve(pa, pb), 0.0, None)
    q_conv = np.clip(signal.fftconvolve(qa, qb), 0.0, None)

    # the conditional value of output bin k lies in [base + k w, base + (k + 2) w)
    lower = va[0] + vb[0] + width * np.arange(p_conv.size)
    noise = p_conv <= PRUNE_THRESHOLD * max(p_conv.max(), 1.0)
    with np.errstate(divide="ignore"):
        values = np.clip(np.log(q_conv) - np.log(p_conv), lower, lower + 2 * width)
    lost_p = float(p_conv[noise].sum())
    lost_q = float(q_conv[noise].sum())
    return values[~noise], p_conv[~noise], lost_p, lost_q, width


def convolve_llr(a: LLRDist, b: LLRDist, cap: int = CONVOLUTION_ATOM_CAP) -> LLRDist:
    """
    LLR law of the product experiment: the convolution of the two laws under P.

    Exact outer sums with value merging while the product of the atom counts stays
    below the exact limit, then rebinned to `cap` atoms; beyond the limit both laws
    are binned on one grid and convolved by FFT.
    """
    va, ma, minus_a, plus_a = _absorb_deficits(a)
    vb, mb, minus_b, plus_b = _absorb_deficits(b)
    minus_inf = 1.0 - (1.0 - minus_a) * (1.0 - minus_b)
    plus_inf = 1.0 - (1.0 - plus_a) * (1.0 - plus_b)
    metadata = {"convolved": True}

    if va.size == 0 or vb.size == 0:
        return LLRDist.from_atoms(
            np.empty(0), np.empty(0), minus_inf, plus_inf, metadata=metadata
        )

    if va.size * vb.size <= EXACT_PRODUCT_LIMIT:
        values = (va[:, None] + vb[None, :]).ravel()
        masses = (ma[:, None] * mb[None, :]).ravel()
        result = LLRDist.from_atoms(
            values, masses, minus_inf, plus_inf, prune=PRUNE_THRESHOLD, metadata=metadata
        )
        return rebin_llr(result, cap)

    order_a, order_b = np.argsort(va), np.argsort(vb)
    values, masses, lost_p, lost_q, width = _fft_convolve(
        (va[order_a], ma[order_a]), (vb[order_b], mb[order_b]), cap
    )
    logger.debug("FFT convolution of %d x %d atoms at width %.3g", va.size, vb.size, width)
    return LLRDist.from_atoms(
        values,
        masses,
        minus_inf,
        plus_inf,
        p_deficit=lost_p,
        q_deficit=lost_q,
        prune=PRUNE_THRESHOLD,
        metadata={**metadata, "fft_width": width},
    )


def _is_idp(operand: Any) -> bool:
    return getattr(getattr(operand, "source", None), "kind", None) == "idp"


def _symbolic_mu(operand: Operand):
    """mu of a Gaussian operand, or None."""
    if isinstance(operand, TradeoffCurve):
        return operand.mu if operand.form == GAUSSIAN else None
    if operand.kind == GAUSSIAN:
        return operand.mu
    if operand.kind == "shift" and operand.family.kind == "gaussian":
        return abs(operand.mu) / operand.family.scale
    return None


def operand_llr(operand: Operand, cap: int = CONVOLUTION_ATOM_CAP) -> LLRDist:
    """LLR law of a tensor operand, realizing piecewise curves as finite pairs.

    Raises:
        ContractError: the operand has neither a realizing pair nor a closed form
    """
    if isinstance(operand, ExperimentPair):
        if operand.kind == "shift" and _symbolic_mu(operand) is None:
            operand = discretize_pair(operand)
        mu = _symbolic_mu(operand)
        return llr(gaussian_pair(mu) if mu is not None else operand)

    if not isinstance(operand, TradeoffCurve):
        raise ContractError(f"Cannot compose an operand of type {type(operand).__name__}")
    if operand.form == GAUSSIAN:
        return llr(gaussian_pair(operand.mu))
    if _is_idp(operand):
        return rebin_llr(operand.source.llr(), cap)
    if operand.form == EPS_DELTA:
        operand = to_piecewise(operand)
    return llr(realize_pair(operand), strict=False)


def tensor(f: Operand, g: Operand, cap: int = CONVOLUTION_ATOM_CAP) -> TradeoffCurve:
    """
    Trade-off function of the product experiment, f (x) g.

    Args:
        f: Curve or experiment pair
        g: Curve or experiment pair
        cap: Atom cap for the convolved LLR law

    Returns:
        G_sqrt(a^2 + b^2) for two Gaussian operands, the parameter sum for two
        infinitely divisible curves, else the curve of the convolved LLR law

    Raises:
        ContractError: an operand can be neither realized nor kept symbolic
    """
    mu_f, mu_g = _symbolic_mu_or_none(f), _symbolic_mu_or_none(g)
    if mu_f is not None and mu_g is not None:
        return gaussian_curve(float(np.hypot(mu_f, mu_g)))
    if _is_idp(f) and _is_idp(g):
        return (f.source + g.source).curve()

    product = convolve_llr(operand_llr(f, cap), operand_llr(g, cap), cap)
    result = curve_from_llr(product)
    logger.info("Tensor product built from %d LLR atoms", product.values.size)
    return result


def _symbolic_mu_or_none(operand: Any):
    if isinstance(operand, (TradeoffCurve, ExperimentPair)):
        return _symbolic_mu(operand)
    raise ContractError(f"Cannot compose an operand of type {type(operand).__name__}")


def self_compose_llr(d: LLRDist, n: int, cap: int = CONVOLUTION_ATOM_CAP) -> LLRDist:
    """n-fold convolution power by repeated doubling."""
    result = None
    base = d
    while True:
        if n & 1:
            result = base if result is None else convolve_llr(result, base, cap)
        n >>= 1
        if not n:
            return result
        base = convolve_llr(base, base, cap)


def self_compose(e: Operand, n: int, cap: int = CONVOLUTION_ATOM_CAP) -> TradeoffCurve:
    """
    f^(x)n for the curve of a pair (or a curve).

    Raises:
        DomainError: n < 1
        ContiguityError: a discrete pair with Q not << P
    """
    if n < 1:
        raise DomainError(f"Composition count must be positive, got {n}")

    mu = _symbolic_mu_or_none(e)
    if mu is not None:
        return gaussian_curve(mu * np.sqrt(n))
    if _is_idp(e):
        return (e.source * n).curve()
    if n == 1:
        return curve(e) if isinstance(e, ExperimentPair) else e

    if isinstance(e, ExperimentPair) and e.kind == "discrete":
        base = llr(e)
    else:
        base = operand_llr(e, cap)
    composed = self_compose_llr(base, n, cap)
    logger.info("Self-composed %d times: %d LLR atoms", n, composed.values.size)
    return curve_from_llr(composed)


def clt_limit(kl_sum: float, kappa2_sum: float) -> TradeoffCurve:
    """G_(2k/s) for k = sum kl and s^2 = sum kappa_2."""
    if not kappa2_sum > 0:
        if kl_sum == 0 and kappa2_sum == 0:
            return gaussian_curve(0.0)
        raise DomainError(f"Sum of kappa_2 must be positive, got {kappa2_sum}")
    return gaussian_curve(2.0 * max(kl_sum, 0.0) / np.sqrt(kappa2_sum))


def clt_moment_sums(curves: Iterable[TradeoffCurve]) -> Dict[str, float]:
    """Row sums of the moment functionals over a triangular array row."""
    moments = [moment_functionals(f) for f in curves]
    return {
        "kl_sum": float(sum(m.kl for m in moments)),
        "kappa2_sum": float(sum(m.kappa2 for m in moments)),
        "kappa3_sum": float(sum(m.kappa3 for m in moments)),
        "kl_max": float(max(m.kl for m in moments)),
    }


def convergence_report(
    array: Callable[[int], Operand],
    ns: Sequence[int],
    limit: TradeoffCurve,
    cap: int = CONVOLUTION_ATOM_CAP,
) -> List[Dict[str, Any]]:
    """
    Distances from row n of a triangular array, composed n times, to its limit.

    Args:
        array: Maps n to the per-step pair (or curve) of row n
        ns: Row sizes
        limit: Limiting curve

    Returns:
        One dict per n with n, sup_distance_to_limit, levy_distance_to_limit and
        the composed curve's value at 0
    """
    rows = []
    for n in ns:
        composed = self_compose(array(n), n, cap)
        rows.append(
            {
                "n": int(n),
                "sup_distance_to_limit": sup_distance(composed, limit),
                "levy_distance_to_limit": levy_distance(composed, limit),
                "value_at_zero": float(evaluate(composed, 0.0)),
            }
        )
        logger.info("Convergence row n=%d: sup %.3g", n, rows[-1]["sup_distance_to_limit"])
    return rows


def _log_value(f: TradeoffCurve, alpha: float) -> float:
    if f.form == GAUSSIAN:
        return float(stats.norm.logcdf(stats.norm.isf(alpha) - f.mu))
    value = evaluate(f, alpha)
    return float(np.log(value)) if value > 0 else -np.inf


def analytic_rate(f: TradeoffCurve) -> float:
    """Integral of log|f'| over [0, z_f] with z_f the first zero of f."""
    if f.form == GAUSSIAN:
        return -f.mu**2 / 2.0
    alphas, betas = breakpoints(f)
    widths = np.diff(alphas)
    slopes = np.diff(betas) / widths
    before_zero = slopes < 0
    return float(np.dot(widths[before_zero], np.log(-slopes[before_zero])))


def ldp_rate(
    f: Operand, n_list: Sequence[int], alpha: float = 0.5, cap: int = CONVOLUTION_ATOM_CAP
) -> Dict[str, Any]:
    """
    Large-deviation rate of f^(x)n at a fixed alpha.

    Returns:
        Dict with the empirical (1/n) log f^(x)n(alpha) per n, the analytic rate and
        the gap at the largest n
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")

    base = curve(f) if isinstance(f, ExperimentPair) else f
    if base.form != GAUSSIAN and sup_distance(base, identity_curve()) == 0.0:
        rows = [{"n": int(n), "empirical_rate": 0.0} for n in n_list]
        return {"alpha": alpha, "rows": rows, "analytic_rate": 0.0, "gap": 0.0}

    rows = []
    for n in n_list:
        composed = self_compose(f, n, cap)
        rows.append({"n": int(n), "empirical_rate": _log_value(composed, alpha) / n})
    rate = analytic_rate(base)
    return {
        "alpha": alpha,
        "rows": rows,
        "analytic_rate": rate,
        "gap": abs(rows[-1]["empirical_rate"] - rate) if rows else 0.0,
    }


def inverse_distributes(f: Operand, g: Operand) -> float:
    """sup |(f (x) g)^-1 - f^-1 (x) g^-1|."""
    left = inverse(tensor(f, g))
    fi = inverse(f if isinstance(f, TradeoffCurve) else curve(f))
    gi = inverse(g if isinstance(g, TradeoffCurve) else curve(g))
    return sup_distance(left, tensor(fi, gi))
