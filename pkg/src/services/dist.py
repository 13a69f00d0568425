"""
Distribution Module

Finite atomic distributions are the exact computational substrate of every
trade-off curve: Poisson, Bernoulli and binomial builders, Markov kernels
(Poisson superposition, binomial thinning, partitions), the Esscher tilt and
seeded inverse-CDF sampling. Analytic shift families wrap scipy.stats.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..core.config import (
    EXP_OVERFLOW_LIMIT,
    GAUSSIAN_CELLS_PER_SIGMA,
    GAUSSIAN_SIGMAS,
    MERGE_TOLERANCE,
    POISSON_TAIL,
    POISSON_TAIL_MAX,
    PRUNE_THRESHOLD,
)
from ..core.exceptions import (
    ConfigError,
    DomainError,
    NumericRangeError,
    PartitionError,
)
from ..utils.validation import validate_probability_masses

logger = logging.getLogger(__name__)


def merge_atoms(
    values: np.ndarray, masses: np.ndarray, tolerance: float = MERGE_TOLERANCE
) -> Tuple[np.ndarray, np.ndarray]:
    """Sort atoms and merge values closer than `tolerance` to their predecessor.

    A merged group keeps its smallest value and the summed mass.
    """
    values = np.asarray(values, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if values.size == 0:
        return values, masses

    order = np.argsort(values, kind="stable")
    values, masses = values[order], masses[order]
    starts = np.concatenate(([True], np.diff(values) > tolerance))
    group = np.cumsum(starts) - 1
    return values[starts], np.bincount(group, weights=masses)


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Finite atomic distribution over real labels.

    `deficit` is the mass left out of the atoms (truncated tails, pruned atoms);
    it is carried along and never folded back into the atoms.
    """

    values: np.ndarray
    masses: np.ndarray
    deficit: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, ndmin=1)
        masses = np.array(self.masses, dtype=float, ndmin=1)
        if values.size > 0:
            # structure only: sub-normalized measures (tilts) are legitimate here
            check = validate_probability_masses(values, masses, 0.0, np.inf)
            if not check["valid"]:
                raise DomainError(check["message"])
        if self.deficit < 0:
            raise DomainError(f"Deficit must be nonnegative, got {self.deficit}")
        values.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "deficit", float(self.deficit))

    @classmethod
    def from_atoms(
        cls,
        values: Sequence[float],
        masses: Sequence[float],
        deficit: float = 0.0,
        prune: float = PRUNE_THRESHOLD,
        merge_tolerance: float = MERGE_TOLERANCE,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> "DiscreteDist":
        """Build from unsorted atoms: merge near-equal values, prune tiny masses.

        Pruned mass is added to the deficit.
        """
        values, masses = merge_atoms(values, masses, merge_tolerance)
        if np.any(masses < 0):
            raise DomainError("Atom masses must be nonnegative")
        keep = masses > prune if prune > 0 else masses > 0
        pruned = float(masses[~keep].sum())
        if pruned > 0:
            logger.debug("Pruned %d atoms carrying mass %.3g", int((~keep).sum()), pruned)
        return cls(
            values=values[keep],
            masses=masses[keep],
            deficit=deficit + pruned,
            metadata=dict(metadata or {}),
        )

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def size(self) -> int:
        return int(self.values.size)

    def is_normalized(self, tolerance: float = 1e-9) -> bool:
        """True when atoms plus deficit carry unit mass."""
        check = validate_probability_masses(self.values, self.masses, self.deficit, tolerance)
        return bool(check["valid"])

    def mean(self) -> float:
        return float(np.dot(self.values, self.masses) / self.masses.sum())

    def variance(self) -> float:
        centred = self.values - self.mean()
        return float(np.dot(centred**2, self.masses) / self.masses.sum())

    def cdf(self, x: Any) -> np.ndarray:
        """Right-continuous distribution function of the atoms."""
        cumulative = np.concatenate(([0.0], np.cumsum(self.masses)))
        return cumulative[np.searchsorted(self.values, np.asarray(x, dtype=float), side="right")]

    def masses_on(self, labels: np.ndarray, tolerance: float = MERGE_TOLERANCE) -> np.ndarray:
        """Masses of this distribution placed on a sorted label array."""
        labels = np.asarray(labels, dtype=float)
        out = np.zeros(labels.size)
        if self.size == 0:
            return out
        index = np.searchsorted(labels, self.values - tolerance)
        index = np.minimum(index, labels.size - 1)
        if np.any(np.abs(labels[index] - self.values) > tolerance):
            raise DomainError("Distribution has atoms outside the label set")
        np.add.at(out, index, self.masses)
        return out

    def affine(self, scale: float, shift: float) -> "DiscreteDist":
        """Law of scale * X + shift."""
        if scale == 0:
            return point_mass(shift)
        return DiscreteDist.from_atoms(
            scale * self.values + shift,
            self.masses,
            deficit=self.deficit,
            prune=0.0,
            metadata=self.metadata,
        )


def align_distributions(
    p: DiscreteDist, q: DiscreteDist, tolerance: float = MERGE_TOLERANCE
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Place two distributions on the union of their labels."""
    union = np.concatenate((p.values, q.values))
    labels, _ = merge_atoms(union, np.zeros(union.size), tolerance)
    return labels, p.masses_on(labels, tolerance), q.masses_on(labels, tolerance)


def point_mass(value: float) -> DiscreteDist:
    return DiscreteDist(np.array([float(value)]), np.array([1.0]), metadata={"family": "point"})


def bernoulli(p: float) -> DiscreteDist:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"Bernoulli parameter must lie in [0, 1], got {p}")
    return DiscreteDist.from_atoms(
        [0.0, 1.0], [1.0 - p, p], prune=0.0, metadata={"family": "bernoulli", "p": p}
    )


def binomial(n: int, p: float, prune: float = PRUNE_THRESHOLD) -> DiscreteDist:
    if n < 1:
        raise DomainError(f"Binomial size must be positive, got {n}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"Binomial parameter must lie in [0, 1], got {p}")
    ks = np.arange(n + 1)
    return DiscreteDist.from_atoms(
        ks, stats.binom.pmf(ks, n, p), prune=prune, metadata={"family": "binomial", "n": n, "p": p}
    )


def poisson_support_max(lam: float, tail: float = POISSON_TAIL) -> int:
    """Smallest K with P(N > K) < tail for N ~ Poisson(lam)."""
    k = max(int(stats.poisson.isf(tail, lam)), 0)
    while stats.poisson.sf(k, lam) >= tail:
        k += 1
    while k > 0 and stats.poisson.sf(k - 1, lam) < tail:
        k -= 1
    return k


def poisson(
    lam: float,
    tail: float = POISSON_TAIL,
    support_max: Optional[int] = None,
    prune: float = PRUNE_THRESHOLD,
) -> DiscreteDist:
    """
    Truncated Poisson pmf on {0..K}.

    The omitted upper tail (< tail unless a smaller support_max is forced) is
    recorded as the deficit; the atoms are not renormalized.

    Raises:
        DomainError: lam <= 0
        ConfigError: tail outside (0, 1e-3)
    """
    if not lam > 0:
        raise DomainError(f"Poisson rate must be positive, got {lam}")
    if not 0.0 < tail < POISSON_TAIL_MAX:
        raise ConfigError(f"Poisson tail must lie in (0, {POISSON_TAIL_MAX}), got {tail}")

    k_max = poisson_support_max(lam, tail) if support_max is None else int(support_max)
    ks = np.arange(k_max + 1)
    return DiscreteDist.from_atoms(
        ks,
        stats.poisson.pmf(ks, lam),
        deficit=float(stats.poisson.sf(k_max, lam)),
        prune=prune,
        metadata={"family": "poisson", "rate": lam, "tail": tail},
    )


@dataclass(frozen=True)
class ShiftFamily:
    """Symmetric log-concave location family (Gaussian or Laplace)."""

    kind: str
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace"):
            raise DomainError(f"Unknown shift family '{self.kind}'")
        if not self.scale > 0:
            raise DomainError(f"Shift family scale must be positive, got {self.scale}")

    @property
    def law(self):
        if self.kind == "gaussian":
            return stats.norm(loc=self.location, scale=self.scale)
        return stats.laplace(loc=self.location, scale=self.scale)

    def shifted(self, mu: float) -> "ShiftFamily":
        return ShiftFamily(self.kind, self.location + mu, self.scale)

    def cdf(self, x: Any) -> np.ndarray:
        return self.law.cdf(x)

    def sf(self, x: Any) -> np.ndarray:
        return self.law.sf(x)

    def quantile(self, u: Any) -> np.ndarray:
        return self.law.ppf(u)

    def isf(self, u: Any) -> np.ndarray:
        return self.law.isf(u)

    def pdf(self, x: Any) -> np.ndarray:
        return self.law.pdf(x)

    def cell_masses(self, edges: np.ndarray) -> np.ndarray:
        """Masses of the cells (-inf, e0), [e0, e1), ..., [eN, inf).

        Cells above the location use survival-function differences so the upper
        tail keeps its relative precision.
        """
        bounds = np.concatenate(([-np.inf], np.asarray(edges, dtype=float), [np.inf]))
        lo, hi = bounds[:-1], bounds[1:]
        law = self.law
        left = law.cdf(hi) - law.cdf(lo)
        right = law.sf(lo) - law.sf(hi)
        return np.clip(np.where(lo >= self.location, right, left), 0.0, None)


def gaussian_llr_cells(
    k: float,
    s2: float,
    step: Optional[float] = None,
    sigmas: float = GAUSSIAN_SIGMAS,
    cells_per_sigma: int = GAUSSIAN_CELLS_PER_SIGMA,
) -> DiscreteDist:
    """
    N(-k, s2) coarsened onto LLR cells.

    The cells cover +-sigmas standard deviations around both N(-k, s2) and its
    tilt N(s2 - k, s2), with one unbounded cell at each end. Each cell's atom sits
    at log(Q(cell) / P(cell)), so the Esscher tilt of the result is exactly the cell
    law of the tilted Gaussian.
    """
    if s2 < 0 or k < 0:
        raise DomainError("Gaussian LLR needs k >= 0 and s2 >= 0")
    if s2 == 0:
        return point_mass(-k)

    sigma = float(np.sqrt(s2))
    step = sigma / cells_per_sigma if step is None else step
    lower, upper = -k - sigmas * sigma, s2 - k + sigmas * sigma
    edges = np.arange(lower, upper + step, step)

    null = ShiftFamily("gaussian", -k, sigma)
    tilted = ShiftFamily("gaussian", s2 - k, sigma)
    p_cells, q_cells = null.cell_masses(edges), tilted.cell_masses(edges)
    keep = (p_cells > 0) & (q_cells > 0)
    values = np.log(q_cells[keep]) - np.log(p_cells[keep])
    logger.debug("Gaussian LLR N(%.4g, %.4g) on %d cells", -k, s2, int(keep.sum()))
    return DiscreteDist.from_atoms(
        values,
        p_cells[keep],
        deficit=float(p_cells[~keep].sum()),
        prune=0.0,
        metadata={"family": "gaussian_llr", "k": k, "s2": s2, "step": step},
    )


@dataclass(frozen=True)
class Kernel:
    """Markov kernel on the labels of a DiscreteDist."""

    kind: str
    rate: float = 0.0
    keep: float = 1.0
    bin_labels: Tuple[float, ...] = ()
    bin_targets: Tuple[float, ...] = ()

    @classmethod
    def superpose(cls, rate: float) -> "Kernel":
        """Add an independent Poisson(rate) count."""
        if rate < 0:
            raise DomainError(f"Superposition rate must be nonnegative, got {rate}")
        return cls(kind="poisson_superpose", rate=rate)

    @classmethod
    def thin(cls, keep: float) -> "Kernel":
        """Keep each unit of a count independently with probability `keep`."""
        if not 0.0 <= keep <= 1.0:
            raise DomainError(f"Thinning probability must lie in [0, 1], got {keep}")
        return cls(kind="binomial_thin", keep=keep)

    @classmethod
    def partition(cls, bin_map: Mapping[float, float]) -> "Kernel":
        """Deterministic map from each label to the label of its bin."""
        labels = sorted(bin_map)
        return cls(
            kind="partition",
            bin_labels=tuple(float(x) for x in labels),
            bin_targets=tuple(float(bin_map[x]) for x in labels),
        )

    def transition_matrix(self, support_max: int, tail: float = POISSON_TAIL) -> np.ndarray:
        """Rows K(k, .) for k = 0..support_max on a common truncated support."""
        if self.kind == "partition":
            raise DomainError("Partition kernels have no integer transition matrix")
        rows = [apply_kernel(self, point_mass(k), tail) for k in range(support_max + 1)]
        width = int(max(row.values.max() for row in rows)) + 1
        matrix = np.zeros((support_max + 1, width))
        for k, row in enumerate(rows):
            matrix[k, row.values.astype(int)] = row.masses
        return matrix


def _dense_counts(p: DiscreteDist) -> np.ndarray:
    if p.size == 0 or np.any(p.values < 0) or np.any(p.values != np.round(p.values)):
        raise DomainError("Poisson kernels need a distribution on nonnegative integers")
    dense = np.zeros(int(p.values.max()) + 1)
    dense[p.values.astype(int)] = p.masses
    return dense


def apply_kernel(k: Kernel, p: DiscreteDist, tail: float = POISSON_TAIL) -> DiscreteDist:
    """
    Push a distribution through a Markov kernel.

    Raises:
        DomainError: Poisson kernel on non-integer support
        PartitionError: partition missing some labels
    """
    if k.kind == "poisson_superpose":
        dense = _dense_counts(p)
        if k.rate == 0:
            return p
        noise = poisson(k.rate, tail)
        noise_dense = _dense_counts(noise)
        combined = np.convolve(dense, noise_dense)
        deficit = p.deficit + noise.deficit - p.deficit * noise.deficit
        return DiscreteDist.from_atoms(
            np.arange(combined.size), combined, deficit=deficit, metadata=p.metadata
        )

    if k.kind == "binomial_thin":
        dense = _dense_counts(p)
        if k.keep == 1.0:
            return p
        out = np.zeros(dense.size)
        for count in np.nonzero(dense)[0]:
            kept = np.arange(count + 1)
            out[: count + 1] += dense[count] * stats.binom.pmf(kept, count, k.keep)
        return DiscreteDist.from_atoms(
            np.arange(out.size), out, deficit=p.deficit, metadata=p.metadata
        )

    if k.kind == "partition":
        labels = np.asarray(k.bin_labels)
        targets = np.asarray(k.bin_targets)
        if labels.size == 0:
            raise PartitionError("Partition kernel has no bins")
        index = np.minimum(np.searchsorted(labels, p.values - MERGE_TOLERANCE), labels.size - 1)
        uncovered = np.abs(labels[index] - p.values) > MERGE_TOLERANCE
        if np.any(uncovered):
            missing = ", ".join(f"{x:g}" for x in p.values[uncovered][:5])
            raise PartitionError(f"Partition does not cover labels: {missing}")
        return DiscreteDist.from_atoms(
            targets[index], p.masses, deficit=p.deficit, prune=0.0, metadata=p.metadata
        )

    raise DomainError(f"Unknown kernel kind '{k.kind}'")


def esscher_tilt(p: DiscreteDist) -> Tuple[DiscreteDist, float]:
    """
    Exponential change of measure dQ(x) = e^x dP(x).

    Returns the tilted measure and its normalizer Z = sum e^x mass; the tilt is a
    probability measure only when Z = 1.

    Raises:
        NumericRangeError: e^x overflows for some atom
    """
    if p.size and p.values.max() > EXP_OVERFLOW_LIMIT:
        bad = float(p.values.max())
        raise NumericRangeError(f"Esscher tilt overflows at atom value {bad:.6g}", value=bad)

    weights = np.exp(p.values) * p.masses
    normalizer = float(weights.sum())
    tilted = DiscreteDist(
        p.values,
        weights,
        deficit=max(0.0, 1.0 - normalizer),
        metadata={**p.metadata, "tilt_normalizer": normalizer},
    )
    return tilted, normalizer


def sample(d: DiscreteDist, seed: int, n: int) -> np.ndarray:
    """
    n inverse-CDF draws on a seeded uniform stream.

    Draw U selects the atom k with F(k-1) <= U < F(k); a U landing in the deficit
    maps to the last atom.
    """
    if n < 1:
        raise DomainError(f"Sample size must be positive, got {n}")
    if d.size == 0:
        raise DomainError("Cannot sample from a distribution without atoms")

    uniforms = np.random.default_rng(seed).random(n)
    index = np.searchsorted(np.cumsum(d.masses), uniforms, side="right")
    return d.values[np.minimum(index, d.size - 1)]
