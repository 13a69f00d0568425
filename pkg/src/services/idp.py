"""
Infinitely Divisible Limits Module

Trade-off functions of infinitely divisible LLR laws P_inf with Q_inf its Esscher
tilt: a Gaussian part N(-k, 2k) plus independent Poisson parts, closed under tensor
products and n-th roots. Gaussian mixture experiments fall outside the class; their
curves are computed by a waterfilling allocation and by direct Neyman-Pearson on the
mixture law, and reproduced by a random-stopping simulation.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from ..core.config import (
    ALPHA_STEP,
    CROSS_CHECK_TOLERANCE,
    GAUSSIAN_CELLS_PER_SIGMA,
    GAUSSIAN_SIGMAS,
    MASS_TOLERANCE,
    MIXTURE_ALPHA_STEP,
    MIXTURE_SLOPE_SEPARATION,
    POISSON_TAIL,
    STOPPING_DRAWS,
    STOPPING_LAMBDA_STEP,
    TILT_TOLERANCE,
    WATERFILL_LOG_SLOPE_RANGE,
    WATERFILL_TOLERANCE,
)
from ..core.exceptions import DomainError, NumericalConsistencyError, SpecError
from ..utils.validation import validate_mixture_components
from .compose import convolve_llr, self_compose
from .dist import gaussian_llr_cells
from .neyman import LLRDist, curve_from_llr, gaussian_tilt_normalizer, llr, poisson_pair
from .tofcurve import (
    EPS_DELTA,
    BayesRisk,
    TradeoffCurve,
    alpha_grid,
    evaluate,
    from_bayes_risk,
    gaussian_curve,
    identity_curve,
    levy_distance,
    piecewise_curve,
    sup_distance,
    to_bayes_risk,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IDPCurveSpec:
    """
    Gaussian part N(-k, variance) and Poisson parts (lambda1, lambda2), each the LLR
    law lambda1 - lambda2 + log(lambda2 / lambda1) Poisson(lambda1).

    variance defaults to 2k, the only value for which the tilt is a probability
    measure.
    """

    k: float = 0.0
    poisson_parts: Tuple[Tuple[float, float], ...] = ()
    variance: Optional[float] = None
    tail: float = POISSON_TAIL

    kind = "idp"

    def __post_init__(self):
        if self.k < 0:
            raise DomainError(f"Gaussian part needs k >= 0, got {self.k}")
        for lambda1, lambda2 in self.poisson_parts:
            if not (lambda1 > 0 and lambda2 > 0):
                raise DomainError("Poisson part rates must be positive")
        object.__setattr__(
            self, "poisson_parts", tuple((float(a), float(b)) for a, b in self.poisson_parts)
        )

    @property
    def s2(self) -> float:
        return 2.0 * self.k if self.variance is None else float(self.variance)

    @classmethod
    def from_dict(cls, spec: Dict[str, Any]) -> "IDPCurveSpec":
        gaussian = spec.get("gaussian", {}) or {}
        parts = spec.get("poisson", []) or []
        if isinstance(parts, dict):
            parts = [parts]
        return cls(
            k=float(gaussian.get("k", 0.0)),
            variance=gaussian.get("variance"),
            poisson_parts=tuple((p["lambda1"], p["lambda2"]) for p in parts),
        )

    @staticmethod
    def _merged(parts: Sequence[Tuple[float, float]]) -> Tuple[Tuple[float, float], ...]:
        """Parts with the same jump log(lambda2 / lambda1) add up rate-wise."""
        merged: List[List[float]] = []
        for lambda1, lambda2 in parts:
            for entry in merged:
                if np.isclose(np.log(lambda2 / lambda1), np.log(entry[1] / entry[0]), atol=1e-12):
                    entry[0] += lambda1
                    entry[1] += lambda2
                    break
            else:
                merged.append([lambda1, lambda2])
        return tuple((a, b) for a, b in merged)

    def __add__(self, other: "IDPCurveSpec") -> "IDPCurveSpec":
        """Spec of the tensor product."""
        variance = None
        if self.variance is not None or other.variance is not None:
            variance = self.s2 + other.s2
        return IDPCurveSpec(
            k=self.k + other.k,
            poisson_parts=self._merged(self.poisson_parts + other.poisson_parts),
            variance=variance,
            tail=min(self.tail, other.tail),
        )

    def __mul__(self, n: float) -> "IDPCurveSpec":
        """Spec of the n-fold tensor power."""
        return IDPCurveSpec(
            k=self.k * n,
            poisson_parts=tuple((a * n, b * n) for a, b in self.poisson_parts),
            variance=None if self.variance is None else self.variance * n,
            tail=self.tail,
        )

    def __truediv__(self, n: float) -> "IDPCurveSpec":
        """Spec of the n-th tensor root."""
        return self * (1.0 / n)

    def tilt_normalizer(self) -> float:
        """E[e^X] under P_inf; the Poisson parts contribute exactly one."""
        return gaussian_tilt_normalizer(self.k, self.s2)

    def llr(
        self,
        sigmas: float = GAUSSIAN_SIGMAS,
        cells_per_sigma: int = GAUSSIAN_CELLS_PER_SIGMA,
    ) -> LLRDist:
        """P_inf as a discrete LLR law: Gaussian cells convolved with the Poisson parts.

        Raises:
            SpecError: the tilt of P_inf is not a probability measure
        """
        normalizer = self.tilt_normalizer()
        if abs(normalizer - 1.0) > TILT_TOLERANCE:
            raise SpecError(
                f"Gaussian part N(-{self.k}, {self.s2}) tilts to mass {normalizer:.6g}; "
                "its variance must be 2k"
            )

        laws: List[LLRDist] = []
        if self.s2 > 0:
            cells = gaussian_llr_cells(
                self.k, self.s2, sigmas=sigmas, cells_per_sigma=cells_per_sigma
            )
            laws.append(
                LLRDist.from_atoms(cells.values, cells.masses, p_deficit=cells.deficit, prune=0.0)
            )
        for lambda1, lambda2 in self.poisson_parts:
            laws.append(llr(poisson_pair(lambda1, lambda2, self.tail)))
        if not laws:
            return LLRDist.from_atoms(np.zeros(1), np.ones(1))

        law = laws[0]
        for other in laws[1:]:
            law = convolve_llr(law, other)

        if abs(law.tilt_normalizer + law.q_deficit + law.plus_inf_mass - 1.0) > TILT_TOLERANCE:
            raise SpecError(f"Discretized tilt normalizer {law.tilt_normalizer:.9g} is off")
        return law

    def curve(self) -> TradeoffCurve:
        return idp_curve(self)


def idp_curve(spec: IDPCurveSpec) -> TradeoffCurve:
    """
    Trade-off curve T(P_inf, Q_inf) of an infinitely divisible spec.

    The returned curve carries its parameters as the source, so tensor products and
    powers of such curves stay inside the class.
    """
    if spec.k == 0 and spec.s2 == 0 and not spec.poisson_parts:
        return TradeoffCurve(form=EPS_DELTA, epsilon=0.0, delta=0.0, source=spec)

    law = spec.llr()
    result = curve_from_llr(law, source=spec)
    logger.info(
        "IDP curve for k=%.4g with %d Poisson parts (%d LLR atoms)",
        spec.k,
        len(spec.poisson_parts),
        law.values.size,
    )
    return result


def gaussian_fit(f: TradeoffCurve, mu_max: float = 10.0) -> Dict[str, float]:
    """Closest Gaussian-only member G_mu of the class in sup distance."""
    result = optimize.minimize_scalar(
        lambda mu: sup_distance(f, gaussian_curve(mu)),
        bounds=(0.0, mu_max),
        method="bounded",
        options={"xatol": 1e-6},
    )
    return {"mu": float(result.x), "sup_distance": float(result.fun), "k": float(result.x**2 / 2)}


@dataclass(frozen=True)
class MixtureSpec:
    """Mixture over stopping times: weight lambda_i on G_(sigma sqrt(t_i))."""

    weights: Tuple[float, ...]
    times: Tuple[float, ...]
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        check = validate_mixture_components(self.weights, self.times, MASS_TOLERANCE)
        if not check["valid"]:
            raise DomainError(check["message"])
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def from_dict(cls, spec: Dict[str, Any]) -> "MixtureSpec":
        components = spec["components"]
        return cls(
            weights=tuple(c["weight"] for c in components),
            times=tuple(c["time"] for c in components),
            sigma=float(spec.get("sigma", 1.0)),
        )

    @property
    def mus(self) -> np.ndarray:
        return self.sigma * np.sqrt(np.asarray(self.times))

    def component_curves(self) -> List[TradeoffCurve]:
        return [gaussian_curve(mu) for mu in self.mus]


def _slope_quantiles(mus: np.ndarray, log_slope: np.ndarray) -> np.ndarray:
    """z_i with G_mu_i'(sf(z_i)) = -e^s, for each (log-slope, component)."""
    return (np.asarray(log_slope)[:, None] + mus[None, :] ** 2 / 2.0) / mus[None, :]


def _allocations(mus: np.ndarray, log_slope: np.ndarray) -> np.ndarray:
    """alpha_i where G_mu_i has slope -e^s, for each (log-slope, component)."""
    return stats.norm.sf(_slope_quantiles(mus, log_slope))


def waterfill_log_slopes(spec: MixtureSpec, alphas: np.ndarray) -> np.ndarray:
    """
    Common log-slope s of the optimal allocation for each alpha.

    The optimum of inf sum lambda_i f_i(alpha_i) subject to sum lambda_i alpha_i =
    alpha equalizes the component slopes at -e^s; s is found by bisection for every
    alpha at once.
    """
    weights, mus = np.asarray(spec.weights), spec.mus
    lo = np.full(alphas.size, WATERFILL_LOG_SLOPE_RANGE[0])
    hi = np.full(alphas.size, WATERFILL_LOG_SLOPE_RANGE[1])
    iterations = 0
    while np.max(hi - lo) > WATERFILL_TOLERANCE:
        mid = 0.5 * (lo + hi)
        # allocated type I error falls as the slope magnitude grows
        too_much = _allocations(mus, mid) @ weights > alphas
        lo = np.where(too_much, mid, lo)
        hi = np.where(too_much, hi, mid)
        iterations += 1
    logger.debug("Waterfilling converged after %d bisection steps", iterations)
    return 0.5 * (lo + hi)


def tangent_points(spec: MixtureSpec, log_slopes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mixture curve points (sum lambda_i alpha_i, sum lambda_i f_i(alpha_i)) where every
    component has slope -e^s, i.e. the touching points of the supporting lines of
    slope -e^s.
    """
    weights, mus = np.asarray(spec.weights), spec.mus
    z = _slope_quantiles(mus, log_slopes)
    return stats.norm.sf(z) @ weights, stats.norm.cdf(z - mus[None, :]) @ weights


def bayes_log_slopes(step: float = ALPHA_STEP) -> np.ndarray:
    """log((1 - lambda) / lambda) over the interior priors of the Bayes-risk grid."""
    lam = alpha_grid(step)
    lam = lam[(lam > 0.0) & (lam < 1.0)]
    return np.log1p(-lam) - np.log(lam)


def waterfill_curve(spec: MixtureSpec, alphas: np.ndarray) -> np.ndarray:
    """inf of sum lambda_i f_i(alpha_i) subject to sum lambda_i alpha_i = alpha."""
    weights, mus = np.asarray(spec.weights), spec.mus
    allocation = _allocations(mus, waterfill_log_slopes(spec, alphas))
    betas = stats.norm.cdf(stats.norm.isf(allocation) - mus[None, :]) @ weights
    betas[alphas <= 0.0] = 1.0
    betas[alphas >= 1.0] = 0.0
    return np.minimum(betas, 1.0 - alphas)


def direct_mixture_curve(
    spec: MixtureSpec,
    sigmas: float = GAUSSIAN_SIGMAS,
    cells_per_sigma: int = GAUSSIAN_CELLS_PER_SIGMA,
) -> TradeoffCurve:
    """
    Neyman-Pearson curve of P_inf = sum lambda_i N(-s_i / 2, s_i) against
    Q_inf = sum lambda_i N(s_i / 2, s_i), s_i = sigma^2 t_i, on LLR cells.

    The likelihood ratio is e^x, so thresholds on x are the optimal tests and the
    cell edges give the exact curve points.
    """
    weights = np.asarray(spec.weights)
    scales = spec.mus
    variances = scales**2
    lower = np.min(-variances / 2.0 - (sigmas + 2.0) * scales)
    upper = np.max(variances / 2.0 + (sigmas + 2.0) * scales)
    step = scales.min() / cells_per_sigma
    edges = np.arange(lower, upper + step, step)

    alphas = stats.norm.sf((edges[:, None] + variances / 2.0) / scales) @ weights
    betas = stats.norm.cdf((edges[:, None] - variances / 2.0) / scales) @ weights
    alphas = np.concatenate(([1.0], alphas, [0.0]))[::-1]
    betas = np.concatenate(([0.0], betas, [1.0]))[::-1]
    return piecewise_curve(
        alphas, np.minimum(betas, 1.0 - alphas), metadata={"mixture": "direct", "step": step}
    )


def mixture_curve(
    spec: MixtureSpec,
    alpha_step: float = MIXTURE_ALPHA_STEP,
    cross_check_tolerance: float = CROSS_CHECK_TOLERANCE,
    bayes_step: float = ALPHA_STEP,
) -> TradeoffCurve:
    """
    Trade-off curve of the mixture experiment.

    Breakpoints are the waterfilling optima on `alpha_grid(alpha_step)` together with
    the touching points of every prior on the `bayes_step` Bayes-risk grid, so the
    Bayes risk of the result is the weighted sum of the component risks on that grid.
    The gap to the direct Neyman-Pearson curve is recorded as
    metadata['cross_check_gap'].

    Raises:
        NumericalConsistencyError: the two solvers disagree beyond tolerance
    """
    grid = alpha_grid(alpha_step)
    slopes = np.unique(
        np.concatenate((bayes_log_slopes(bayes_step), waterfill_log_slopes(spec, grid[1:-1])))
    )
    # nearly equal slopes give breakpoints too close for stable segment slopes
    slopes = slopes[np.concatenate(([True], np.diff(slopes) > MIXTURE_SLOPE_SEPARATION))]
    alphas, betas = tangent_points(spec, slopes[::-1])
    alphas = np.concatenate(([0.0], alphas, [1.0]))
    betas = np.concatenate(([1.0], betas, [0.0]))
    variational = piecewise_curve(
        alphas,
        np.minimum(betas, 1.0 - alphas),
        metadata={"mixture": "waterfill", "step": alpha_step, "bayes_step": bayes_step},
    )
    direct = direct_mixture_curve(spec)
    gap = sup_distance(variational, direct, step=ALPHA_STEP)
    if gap > cross_check_tolerance:
        raise NumericalConsistencyError(
            f"Mixture solvers disagree by {gap:.3g} (tolerance {cross_check_tolerance})", gap=gap
        )
    logger.info("Mixture curve with %d components, cross-check gap %.3g", len(spec.times), gap)
    return piecewise_curve(
        variational.alphas,
        variational.betas,
        metadata={**variational.metadata, "cross_check_gap": gap},
    )


def random_stopping_sim(
    spec: MixtureSpec,
    n: int,
    seeds: Sequence[int],
    draws: int = STOPPING_DRAWS,
    step: float = STOPPING_LAMBDA_STEP,
    reference: Optional[TradeoffCurve] = None,
) -> Dict[str, Any]:
    """
    Gaussian steps G_(sigma / sqrt(n)) composed a random number N ~ n tau of times.

    A draw stopping after m steps observes self_compose(G_(sigma / sqrt(n)), m), which
    only depends on the stopping time drawn, so the m-fold compositions are built once
    per component. Draws are mixed by averaging Bayes risks and the resulting curve
    is compared with the mixture curve in Levy distance, per seed and pooled in seed
    order.
    """
    if n < 50:
        raise DomainError(f"Random stopping needs n >= 50, got {n}")
    if not seeds:
        raise DomainError("Need at least one seed")

    reference = mixture_curve(spec) if reference is None else reference
    lambdas = alpha_grid(step)
    steps = np.round(n * np.asarray(spec.times)).astype(int)
    step_curve = gaussian_curve(spec.sigma / np.sqrt(n))
    stopped = [self_compose(step_curve, int(m)) if m > 0 else identity_curve() for m in steps]
    risks = np.array([to_bayes_risk(f, lambdas).risks for f in stopped])

    per_seed = []
    counts_total = np.zeros(len(spec.times))
    for seed in seeds:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(spec.times), size=draws, p=np.asarray(spec.weights))
        counts = np.bincount(picks, minlength=len(spec.times))
        counts_total += counts
        mixed = from_bayes_risk(_risk(lambdas, counts @ risks / draws), lambdas)
        per_seed.append({"seed": int(seed), "levy_distance": levy_distance(mixed, reference)})

    pooled = from_bayes_risk(_risk(lambdas, counts_total @ risks / counts_total.sum()), lambdas)
    report = {
        "n": int(n),
        "draws": int(draws),
        "seeds": per_seed,
        "levy_distance": levy_distance(pooled, reference),
        "value_at_half": float(evaluate(pooled, 0.5)),
    }
    logger.info("Random stopping n=%d pooled Levy distance %.3g", n, report["levy_distance"])
    return report


def _risk(lambdas: np.ndarray, risks: np.ndarray) -> BayesRisk:
    return BayesRisk(lambdas, risks, metadata={"mixed": True})
