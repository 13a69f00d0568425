"""
Exception hierarchy for tradeoff-lab.
Services raise these; the CLI maps UsageError to exit 1 and the rest to exit 2.
"""

from typing import Any, Optional, Tuple


class TradeoffError(Exception):
    """Base class for every error raised by the services."""


class DomainError(TradeoffError, ValueError):
    """A value lies outside the domain an operation accepts."""


class OrderingError(DomainError):
    """Mechanism intensities given in the wrong order (mu1 >= mu2)."""


class PartitionError(DomainError):
    """A partition does not cover every label of a distribution."""


class CalibrationError(DomainError):
    """Mechanism calibration impossible with the supplied statistic range."""


class ConfigError(TradeoffError, ValueError):
    """Invalid numeric configuration."""


class NumericRangeError(TradeoffError, OverflowError):
    """An exponential or intensity overflowed double precision."""

    def __init__(self, message: str, value: Optional[float] = None):
        super().__init__(message)
        self.value = value


class ContiguityError(TradeoffError, ValueError):
    """Q puts mass where P has none, so log(dQ/dP) is not P-a.s. finite."""

    def __init__(self, message: str, escaping_mass: float):
        super().__init__(message)
        self.escaping_mass = escaping_mass


class ContractError(TradeoffError):
    """An operation was called outside its contract."""


class CurveError(ContractError):
    """Breakpoints fail the trade-off certificate."""


class SpecError(ContractError):
    """An infinitely divisible spec does not tilt to a probability measure."""


class NumericalConsistencyError(TradeoffError):
    """Two independent solvers disagree beyond tolerance."""

    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


class VerificationError(TradeoffError):
    """A privacy guarantee failed its domination check."""

    def __init__(
        self,
        message: str,
        pair: Optional[Tuple[Any, Any]] = None,
        alpha: Optional[float] = None,
    ):
        super().__init__(message)
        self.pair = pair
        self.alpha = alpha


class LemmaCheckError(VerificationError):
    """A Poisson thinning / superposition ordering failed."""


class UsageError(TradeoffError):
    """Command-line usage error or malformed spec file."""
