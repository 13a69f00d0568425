"""
Coarsening Module

Trade-off curves of experiments observed through a partition of their sample
space: the coarsened Neyman-Pearson construction for discrete pairs and the
binned curves of Gaussian and Laplace shift families.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..core.config import BIN_TAIL_MASS, MERGE_TOLERANCE, NORMALIZATION_TOLERANCE
from ..core.exceptions import DomainError, PartitionError
from .dist import DiscreteDist, Kernel, ShiftFamily, apply_kernel
from .neyman import ExperimentPair, curve, discrete_pair
from .tofcurve import TradeoffCurve, piecewise_curve

logger = logging.getLogger(__name__)

Bins = Union[Mapping[float, float], Sequence[Sequence[float]]]


def _bin_map(bins: Bins) -> Mapping[float, float]:
    """Label -> bin label; a list of groups maps group i to bin i."""
    if isinstance(bins, Mapping):
        return {float(k): float(v) for k, v in bins.items()}

    mapping = {}
    for index, group in enumerate(bins):
        for label in group:
            if float(label) in mapping:
                raise PartitionError(f"Label {label:g} appears in more than one bin")
            mapping[float(label)] = float(index)
    return mapping


def _require_discrete(e: ExperimentPair) -> None:
    if e.kind != "discrete":
        raise DomainError("Coarsening by a partition needs a discrete pair")


def coarsen_pair(e: ExperimentPair, bins: Bins) -> ExperimentPair:
    """
    Restrict a discrete pair to the sigma-algebra generated by a partition.

    Args:
        e: Discrete experiment pair
        bins: Mapping label -> bin label, or a list of label groups

    Returns:
        Pair (P^G, Q^G) on the bin labels with the bin masses summed

    Raises:
        PartitionError: some label is not covered, or appears twice
    """
    _require_discrete(e)
    kernel = Kernel.partition(_bin_map(bins))
    coarse_p = apply_kernel(kernel, e.P)
    coarse_q = apply_kernel(kernel, e.Q)
    logger.debug("Coarsened %d labels into %d bins", e.P.size, coarse_p.size)
    return discrete_pair(
        coarse_p,
        coarse_q,
        tolerance=NORMALIZATION_TOLERANCE,
        metadata={**e.metadata, "coarsened": True, "bins": int(coarse_p.size)},
    )


def conditional_likelihood_ratio(e: ExperimentPair, bins: Bins) -> pd.DataFrame:
    """
    G = E_P[dQ/dP | bin] computed from the within-bin ratios.

    A bin holding Q-mass on P-null labels has G = inf. The result carries the bin
    masses too, so G can be checked against q_mass / p_mass.
    """
    _require_discrete(e)
    mapping = _bin_map(bins)
    targets = []
    for label in e.labels:
        match = [v for k, v in mapping.items() if abs(k - label) <= MERGE_TOLERANCE]
        if not match:
            raise PartitionError(f"Partition does not cover label {label:g}")
        targets.append(match[0])

    frame = pd.DataFrame({"bin": targets, "p": e.P.masses, "q": e.Q.masses})
    positive = frame["p"] > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        frame["weighted_ratio"] = np.where(positive, frame["p"] * (frame["q"] / frame["p"]), 0.0)
    frame["singular_q"] = np.where(positive, 0.0, frame["q"])

    grouped = frame.groupby("bin", sort=True).sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = grouped["weighted_ratio"] / grouped["p"]
    ratio = ratio.where(grouped["singular_q"] <= 0, np.inf)
    return pd.DataFrame(
        {
            "bin": grouped.index.to_numpy(),
            "p_mass": grouped["p"].to_numpy(),
            "q_mass": grouped["q"].to_numpy(),
            "conditional_ratio": ratio.to_numpy(),
        }
    )


def coarsened_curves(
    e: ExperimentPair, partitions: Sequence[Bins], max_workers: Optional[int] = None
) -> List[TradeoffCurve]:
    """Curves of e under several partitions, in input order."""
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda bins: curve(coarsen_pair(e, bins)), partitions))


def _bin_range(family: ShiftFamily, mu: float, width: float) -> np.ndarray:
    """Bin indices n whose edges n*width cover all but BIN_TAIL_MASS of both laws."""
    if not width > 0 or not np.isfinite(width):
        raise DomainError(f"Bin width must be positive, got {width}")
    shifted = family.shifted(mu)
    low = min(family.quantile(BIN_TAIL_MASS), shifted.quantile(BIN_TAIL_MASS))
    high = max(family.isf(BIN_TAIL_MASS), shifted.isf(BIN_TAIL_MASS))
    return np.arange(int(np.floor(low / width)), int(np.ceil(high / width)) + 1)


def bin_likelihood_ratios(family: ShiftFamily, mu: float, width: float) -> pd.DataFrame:
    """Bin masses p_n, q_n of [n w, (n+1) w) and their ratio F_n = q_n / p_n."""
    ks = _bin_range(family, mu, width)
    edges = ks * width
    p = family.cell_masses(edges)[1:-1]
    q = family.shifted(mu).cell_masses(edges)[1:-1]
    keep = np.maximum(p, q) >= BIN_TAIL_MASS
    with np.errstate(divide="ignore"):
        ratio = q[keep] / p[keep]
    return pd.DataFrame(
        {"bin": ks[:-1][keep], "p_mass": p[keep], "q_mass": q[keep], "ratio": ratio}
    )


def binned_shift_curve(family: ShiftFamily, mu: float, bin_width: float) -> TradeoffCurve:
    """
    T(P^G, Q^G) for P = family, Q = family shifted by mu, G generated by the bins
    [n w, (n+1) w).

    For mu >= 0 the bin ratios increase, so the non-randomized tests reject above a
    bin edge k w: alpha_k = 1 - F(k w), beta_k = F(k w - mu), joined linearly. For
    mu < 0 the binned pair goes through the discrete construction.
    """
    ks = _bin_range(family, mu, bin_width)
    edges = ks * bin_width
    metadata = {"family": family.kind, "mu": float(mu), "coarsened": True, "bin_width": bin_width}
    shifted = family.shifted(mu)

    if mu < 0:
        labels = np.arange(edges.size + 1, dtype=float)
        pair = discrete_pair(
            DiscreteDist.from_atoms(labels, family.cell_masses(edges), prune=0.0),
            DiscreteDist.from_atoms(labels, shifted.cell_masses(edges), prune=0.0),
            tolerance=NORMALIZATION_TOLERANCE,
        )
        exact = curve(pair)
        return piecewise_curve(exact.alphas, exact.betas, metadata=metadata)

    alphas = family.sf(edges)[::-1]
    betas = shifted.cdf(edges)[::-1]
    alphas = np.concatenate(([0.0], alphas, [1.0]))
    betas = np.concatenate(([1.0], betas, [0.0]))
    return piecewise_curve(alphas, betas, metadata=metadata)
