"""
Neyman-Pearson Module

Exact trade-off curves of binary experiments (P, Q) via the Neyman-Pearson lemma,
log-likelihood-ratio laws with their Esscher-tilt normalization, and the moment
functionals kl, kappa_2, kappa_3 of a curve.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate, stats

from ..core.config import (
    ALPHA_STEP,
    EXP_OVERFLOW_LIMIT,
    GAUSSIAN_CELLS_PER_SIGMA,
    GAUSSIAN_SIGMAS,
    MASS_TOLERANCE,
    MERGE_TOLERANCE,
    POISSON_TAIL,
    PRUNE_THRESHOLD,
    QUANTILE_CELLS,
    RATIO_TOLERANCE,
)
from ..core.exceptions import ContiguityError, DomainError, NumericRangeError
from ..utils.validation import validate_probability_masses
from .dist import (
    DiscreteDist,
    ShiftFamily,
    align_distributions,
    bernoulli,
    binomial,
    esscher_tilt,
    gaussian_llr_cells,
    merge_atoms,
    poisson,
    poisson_support_max,
)
from .tofcurve import (
    GAUSSIAN,
    TradeoffCurve,
    alpha_grid,
    breakpoints,
    gaussian_curve,
    piecewise_curve,
    sup_distance,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExperimentPair:
    """
    Binary experiment (P, Q).

    kind 'discrete' carries P and Q on one shared label array; 'shift' carries a
    ShiftFamily and the shift mu; 'gaussian' is the analytic pair N(0,1) vs N(mu,1).
    """

    kind: str
    P: Optional[DiscreteDist] = None
    Q: Optional[DiscreteDist] = None
    family: Optional[ShiftFamily] = None
    mu: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def labels(self) -> np.ndarray:
        return self.P.values

    def swapped(self) -> "ExperimentPair":
        """The pair (Q, P); shift families are symmetric so those are unchanged."""
        if self.kind != "discrete":
            return self
        return ExperimentPair("discrete", P=self.Q, Q=self.P, metadata=self.metadata)


def discrete_pair(
    P: DiscreteDist,
    Q: DiscreteDist,
    align: bool = True,
    tolerance: float = MASS_TOLERANCE,
    metadata: Optional[Dict[str, Any]] = None,
) -> ExperimentPair:
    """
    Discrete experiment on the union of the two label sets.

    Raises:
        DomainError: label sets differ while align=False, or P / Q not normalized
    """
    if not align and (
        P.size != Q.size or np.any(np.abs(P.values - Q.values) > MERGE_TOLERANCE)
    ):
        raise DomainError("P and Q are not on the same label set")

    labels, p_masses, q_masses = align_distributions(P, Q)
    for name, masses, deficit in (("P", p_masses, P.deficit), ("Q", q_masses, Q.deficit)):
        check = validate_probability_masses(labels, masses, deficit, tolerance)
        if not check["valid"]:
            raise DomainError(f"{name}: {check['message']}")

    return ExperimentPair(
        kind="discrete",
        P=DiscreteDist(labels, p_masses, P.deficit, metadata=P.metadata),
        Q=DiscreteDist(labels, q_masses, Q.deficit, metadata=Q.metadata),
        metadata=dict(metadata or {}),
    )


def shift_pair(family: ShiftFamily, mu: float) -> ExperimentPair:
    return ExperimentPair(kind="shift", family=family, mu=float(mu))


def gaussian_pair(mu: float) -> ExperimentPair:
    if not mu >= 0:
        raise DomainError(f"Gaussian pair needs mu >= 0, got {mu}")
    return ExperimentPair(kind=GAUSSIAN, mu=float(mu))


def poisson_pair(lambda1: float, lambda2: float, tail: float = POISSON_TAIL) -> ExperimentPair:
    """(Poisson(lambda1), Poisson(lambda2)) truncated on one common support."""
    support_max = max(poisson_support_max(lambda1, tail), poisson_support_max(lambda2, tail))
    return discrete_pair(
        poisson(lambda1, tail, support_max=support_max, prune=0.0),
        poisson(lambda2, tail, support_max=support_max, prune=0.0),
        metadata={"family": "poisson", "lambda1": lambda1, "lambda2": lambda2},
    )


def bernoulli_pair(p: float, q: float) -> ExperimentPair:
    return discrete_pair(
        bernoulli(p), bernoulli(q), metadata={"family": "bernoulli", "p": p, "q": q}
    )


def binomial_pair(n: int, p: float, q: float) -> ExperimentPair:
    return discrete_pair(
        binomial(n, p, prune=0.0),
        binomial(n, q, prune=0.0),
        metadata={"family": "binomial", "n": n, "p": p, "q": q},
    )


@dataclass(frozen=True, eq=False)
class LLRDist:
    """
    Law of L = log(dQ/dP) under P.

    `under_null` holds the finite values with their P-masses (its deficit is the
    P-mass lost to truncation and pruning); `minus_inf_mass` is the P-mass where
    q = 0, `plus_inf_mass` the Q-mass where p = 0 and `q_deficit` the Q-mass lost
    with the P deficit. `tilt_normalizer` = sum e^L mass, the Q-mass of the
    P-absolutely continuous part.
    """

    under_null: DiscreteDist
    tilt_normalizer: float
    minus_inf_mass: float = 0.0
    plus_inf_mass: float = 0.0
    q_deficit: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_atoms(
        cls,
        values: np.ndarray,
        masses: np.ndarray,
        minus_inf_mass: float = 0.0,
        plus_inf_mass: float = 0.0,
        p_deficit: float = 0.0,
        q_deficit: float = 0.0,
        prune: float = PRUNE_THRESHOLD,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> "LLRDist":
        """Merge near-equal log-ratios and prune tiny atoms, moving both P- and
        Q-mass of pruned atoms into the deficits."""
        values, masses = merge_atoms(values, masses, MERGE_TOLERANCE)
        if values.size and values.max() > EXP_OVERFLOW_LIMIT:
            bad = float(values.max())
            raise NumericRangeError(f"Log-likelihood ratio {bad:.6g} overflows e^L", value=bad)

        dropped = masses <= prune
        if np.any(dropped):
            p_deficit += float(masses[dropped].sum())
            q_deficit += float(np.dot(np.exp(values[dropped]), masses[dropped]))
            values, masses = values[~dropped], masses[~dropped]

        under_null = DiscreteDist(
            values, masses, deficit=p_deficit, metadata=dict(metadata or {})
        )
        _, normalizer = esscher_tilt(under_null)
        return cls(
            under_null=under_null,
            tilt_normalizer=normalizer,
            minus_inf_mass=float(minus_inf_mass),
            plus_inf_mass=float(plus_inf_mass),
            q_deficit=float(q_deficit),
            metadata=dict(metadata or {}),
        )

    @property
    def values(self) -> np.ndarray:
        return self.under_null.values

    @property
    def masses(self) -> np.ndarray:
        return self.under_null.masses

    @property
    def p_deficit(self) -> float:
        return self.under_null.deficit

    def under_alternative(self) -> DiscreteDist:
        """Law of L under Q on the finite atoms (the Esscher tilt)."""
        tilted, _ = esscher_tilt(self.under_null)
        return tilted

    def mean(self) -> float:
        return self.under_null.mean()


def _frontier(
    p_masses: np.ndarray,
    q_masses: np.ndarray,
    log_ratios: np.ndarray,
    drop: float,
    metadata: Dict[str, Any],
    source: Any = None,
) -> TradeoffCurve:
    """
    Neyman-Pearson frontier of atoms (p, q) with log(q / p) given.

    Atoms are taken in decreasing likelihood ratio, ties merged into one segment;
    Q-only mass `drop` is rejected first at no P cost.
    """
    p_total = float(p_masses.sum())
    q_total = float(q_masses.sum()) + drop
    order = np.argsort(-log_ratios, kind="stable")
    p_sorted, q_sorted, lr = p_masses[order], q_masses[order], log_ratios[order]

    with np.errstate(invalid="ignore"):
        tied = (lr[1:] == lr[:-1]) | (np.abs(np.diff(lr)) <= RATIO_TOLERANCE)
    group = np.cumsum(np.concatenate(([True], ~tied))) - 1
    p_groups = np.bincount(group, weights=p_sorted)
    q_groups = np.bincount(group, weights=q_sorted)

    alphas = np.concatenate(([0.0], np.cumsum(p_groups))) / p_total
    # tail sums keep tiny type II errors accurate
    betas = np.concatenate((np.cumsum(q_groups[::-1])[::-1], [0.0])) / q_total
    alphas[-1] = 1.0
    betas = np.clip(betas, 0.0, 1.0)
    logger.debug("Neyman-Pearson frontier with %d segments", p_groups.size)
    return piecewise_curve(alphas, betas, metadata=metadata, source=source)


def _discrete_curve(pair: ExperimentPair) -> TradeoffCurve:
    p_masses = np.append(pair.P.masses, pair.P.deficit)
    q_masses = np.append(pair.Q.masses, pair.Q.deficit)

    q_only = (p_masses <= 0) & (q_masses > 0)
    drop = float(q_masses[q_only].sum())
    keep = p_masses > 0
    p_masses, q_masses = p_masses[keep], q_masses[keep]
    with np.errstate(divide="ignore"):
        log_ratios = np.log(q_masses) - np.log(p_masses)

    deficit = max(pair.P.deficit, pair.Q.deficit)
    if deficit > 1e-9:
        logger.warning("Truncation deficit %.3g lumped into one atom", deficit)
    return _frontier(
        p_masses,
        q_masses,
        log_ratios,
        drop,
        metadata={**pair.metadata, "p_deficit": pair.P.deficit, "q_deficit": pair.Q.deficit},
        source=pair,
    )


def _shift_curve(pair: ExperimentPair, step: float) -> TradeoffCurve:
    family, mu = pair.family, abs(pair.mu)
    if family.kind == "gaussian":
        return gaussian_curve(mu / family.scale)

    grid = alpha_grid(step)
    betas = family.shifted(mu).cdf(family.isf(grid))
    return piecewise_curve(
        grid, betas, metadata={"family": family.kind, "mu": mu, "step": step}
    )


def curve(e: ExperimentPair, step: float = ALPHA_STEP) -> TradeoffCurve:
    """
    Trade-off curve T(P, Q).

    Args:
        e: Experiment pair
        step: Alpha grid step for shift families without a symbolic form

    Returns:
        Exact piecewise curve for discrete pairs, G_mu for Gaussian pairs, the
        closed form F(F^-1(1 - alpha) - mu) sampled on the grid otherwise
    """
    if e.kind == "discrete":
        return _discrete_curve(e)
    if e.kind == "shift":
        return _shift_curve(e, step)
    if e.kind == GAUSSIAN:
        return gaussian_curve(e.mu)
    raise DomainError(f"Unknown pair kind '{e.kind}'")


def curve_from_llr(d: LLRDist, source: Any = None) -> TradeoffCurve:
    """NP curve of the pair (law of L under P, its tilt) including infinite atoms."""
    p_masses = np.concatenate((d.masses, [d.minus_inf_mass, d.p_deficit]))
    q_masses = np.concatenate((np.exp(d.values) * d.masses, [0.0, d.q_deficit]))
    drop = d.plus_inf_mass
    if d.p_deficit <= 0 and d.q_deficit > 0:
        drop += d.q_deficit

    keep = p_masses > 0
    p_masses, q_masses = p_masses[keep], q_masses[keep]
    with np.errstate(divide="ignore"):
        log_ratios = np.log(q_masses) - np.log(p_masses)
    return _frontier(
        p_masses,
        q_masses,
        log_ratios,
        drop,
        metadata={**d.metadata, "atoms": int(d.values.size)},
        source=source,
    )


def discretize_pair(e: ExperimentPair, cells: int = QUANTILE_CELLS) -> ExperimentPair:
    """Shift pair on `cells` equal-probability quantile cells of P."""
    if e.kind == GAUSSIAN:
        e = shift_pair(ShiftFamily("gaussian"), e.mu)
    if e.kind != "shift":
        return e

    null = e.family
    edges = null.quantile(np.arange(1, cells) / cells)
    labels = np.arange(cells, dtype=float)
    p_masses = null.cell_masses(edges)
    q_masses = null.shifted(e.mu).cell_masses(edges)
    return ExperimentPair(
        kind="discrete",
        P=DiscreteDist(labels, p_masses / p_masses.sum()),
        Q=DiscreteDist(labels, q_masses / q_masses.sum()),
        metadata={"family": null.kind, "mu": e.mu, "cells": cells},
    )


def llr(
    e: ExperimentPair,
    strict: bool = True,
    sigmas: float = GAUSSIAN_SIGMAS,
    cells_per_sigma: int = GAUSSIAN_CELLS_PER_SIGMA,
    cells: int = QUANTILE_CELLS,
) -> LLRDist:
    """
    Law of log(dQ/dP) under P.

    Gaussian experiments use LLR cells of N(-mu^2/2, mu^2); other shift families are
    first discretized on quantile cells.

    Raises:
        ContiguityError: Q puts mass where P has none (strict mode)
    """
    if e.kind == GAUSSIAN or (e.kind == "shift" and e.family.kind == "gaussian"):
        mu = e.mu if e.kind == GAUSSIAN else abs(e.mu) / e.family.scale
        k, s2 = mu**2 / 2.0, mu**2
        cells_law = gaussian_llr_cells(k, s2, sigmas=sigmas, cells_per_sigma=cells_per_sigma)
        return LLRDist.from_atoms(
            cells_law.values,
            cells_law.masses,
            p_deficit=cells_law.deficit,
            prune=0.0,
            metadata={"gaussian_mu": mu, "step": cells_law.metadata.get("step")},
        )
    if e.kind == "shift":
        e = discretize_pair(e, cells)

    p_masses, q_masses = e.P.masses, e.Q.masses
    escaping = float(q_masses[p_masses <= 0].sum())
    if strict and escaping > MASS_TOLERANCE:
        raise ContiguityError(
            f"Q is not absolutely continuous w.r.t. P: escaping mass {escaping:.6g}",
            escaping_mass=escaping,
        )

    finite = (p_masses > 0) & (q_masses > 0)
    minus_inf = float(p_masses[(p_masses > 0) & (q_masses <= 0)].sum())
    values = np.log(q_masses[finite]) - np.log(p_masses[finite])
    return LLRDist.from_atoms(
        values,
        p_masses[finite],
        minus_inf_mass=minus_inf,
        plus_inf_mass=escaping,
        p_deficit=e.P.deficit,
        q_deficit=e.Q.deficit,
        prune=0.0,
        metadata=dict(e.metadata),
    )


def llr_identity_check(e: ExperimentPair) -> float:
    """sup |T(P, Q) - T(L_P, L_Q)|, zero up to rounding for discrete pairs with Q << P."""
    distance = sup_distance(curve(e), curve_from_llr(llr(e)))
    logger.debug("LLR identity gap %.3g", distance)
    return distance


@dataclass(frozen=True)
class MomentFunctionals:
    kl: float
    kappa2: float
    kappa3: float
    kappa3_bar: float
    kl_infinite: bool = False
    kappa_infinite: bool = False

    def as_dict(self) -> Dict[str, Any]:
        return {
            "kl": self.kl,
            "kappa2": self.kappa2,
            "kappa3": self.kappa3,
            "kappa3_bar": self.kappa3_bar,
            "kl_infinite": self.kl_infinite,
            "kappa_infinite": self.kappa_infinite,
        }


def _gaussian_moments(mu: float) -> MomentFunctionals:
    if mu == 0:
        return MomentFunctionals(0.0, 0.0, 0.0, 0.0)

    # log|f'| at alpha = 1 - Phi(z) is mu z - mu^2 / 2
    def expect(fn):
        value, _ = integrate.quad(
            lambda z: fn(mu * z - mu**2 / 2.0) * stats.norm.pdf(z), -np.inf, np.inf
        )
        return value

    kl = -expect(lambda x: x)
    return MomentFunctionals(
        kl=kl,
        kappa2=expect(lambda x: x**2),
        kappa3=expect(lambda x: abs(x) ** 3),
        kappa3_bar=expect(lambda x: abs(x + kl) ** 3),
    )


def moment_functionals(f: TradeoffCurve) -> MomentFunctionals:
    """
    kl = -int log|f'|, kappa_2 = int log^2|f'|, kappa_3 = int |log|f'||^3 and
    kappa3_bar = int |log|f'| + kl|^3 over [0, 1].

    Piecewise curves integrate exactly segment by segment; a flat segment makes
    log|f'| nonintegrable, reported through the infinity flags.
    """
    if f.form == GAUSSIAN:
        return _gaussian_moments(f.mu)

    alphas, betas = breakpoints(f)
    widths = np.diff(alphas)
    slopes = np.diff(betas) / widths
    if np.any(slopes >= 0):
        return MomentFunctionals(
            np.inf, np.inf, np.inf, np.inf, kl_infinite=True, kappa_infinite=True
        )

    logs = np.log(-slopes)
    kl = float(-np.dot(widths, logs))
    return MomentFunctionals(
        kl=kl,
        kappa2=float(np.dot(widths, logs**2)),
        kappa3=float(np.dot(widths, np.abs(logs) ** 3)),
        kappa3_bar=float(np.dot(widths, np.abs(logs + kl) ** 3)),
    )


def gaussian_tilt_normalizer(k: float, s2: float) -> float:
    """E[e^X] for X ~ N(-k, s2); equal to one exactly when s2 = 2k."""
    return float(np.exp(-k + s2 / 2.0))


def recover_llr_mean(f: TradeoffCurve, n: int) -> float:
    """Mean of the limiting LLR law recovered as -n kl(f) from one of n equal factors."""
    return -n * moment_functionals(f).kl


def batch_curves(
    pairs: Sequence[ExperimentPair], max_workers: Optional[int] = None
) -> List[TradeoffCurve]:
    """Curves of many pairs, in input order."""
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(curve, pairs))


def realize_pair(f: TradeoffCurve) -> ExperimentPair:
    """
    A finite pair whose curve is f: one atom per segment with P-mass the segment
    width and Q-mass its drop, plus a Q-only atom for f(0) < 1.
    """
    if f.source is not None and getattr(f.source, "kind", None) == "discrete":
        return f.source

    alphas, betas = breakpoints(f)
    p_masses = np.diff(alphas)
    q_masses = -np.diff(betas)
    head = 1.0 - betas[0]
    if head > 0:
        p_masses = np.append(0.0, p_masses)
        q_masses = np.append(head, q_masses)
    labels = np.arange(p_masses.size, dtype=float)
    return ExperimentPair(
        kind="discrete",
        P=DiscreteDist(labels, p_masses),
        Q=DiscreteDist(labels, np.clip(q_masses, 0.0, None)),
        metadata={"realized_from": f.form},
    )
