"""
Distribution Model - Probability vectors and rankings over answer options
"""

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

# Sum tolerance for a valid distribution
SUM_TOLERANCE = 1e-6

# Minimum mass a vector needs before it can be renormalized
DEFAULT_MU_MIN = 1e-6


class DistributionError(ValueError):
    """Exception raised for invalid distributions or rankings"""
    pass


@dataclass(frozen=True)
class ProbDistribution:
    """
    A probability vector over K >= 2 answer options

    Instances are immutable; use `as_array` for numeric work.
    """

    probs: Tuple[float, ...]

    def __post_init__(self):
        """Validate the probability vector"""
        values = tuple(float(p) for p in self.probs)
        object.__setattr__(self, 'probs', values)

        if len(values) < 2:
            raise DistributionError(f"A distribution needs at least 2 options, got {len(values)}")
        if not all(np.isfinite(values)):
            raise DistributionError(f"Non-finite probability in {values}")
        if any(p < 0.0 or p > 1.0 for p in values):
            raise DistributionError(f"Probabilities must lie in [0, 1]: {values}")
        total = sum(values)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise DistributionError(f"Probabilities sum to {total}, expected 1 within {SUM_TOLERANCE}")

    @classmethod
    def renormalize(cls, values: Iterable[float], mu_min: float = DEFAULT_MU_MIN) -> 'ProbDistribution':
        """
        Build a distribution by dividing non-negative weights by their sum

        Args:
            values: Non-negative weights
            mu_min: The sum must exceed this to be renormalized

        Returns:
            ProbDistribution: The normalized distribution

        Raises:
            DistributionError: If a weight is negative or the total mass is too small
        """
        weights = np.asarray(list(values), dtype=float)
        if weights.ndim != 1 or not np.all(np.isfinite(weights)):
            raise DistributionError(f"Cannot renormalize {values}")
        if np.any(weights < 0):
            raise DistributionError(f"Cannot renormalize negative weights: {weights.tolist()}")
        total = float(weights.sum())
        if total <= mu_min:
            raise DistributionError(f"Total mass {total} does not exceed mu_min={mu_min}")
        return cls(tuple((weights / total).tolist()))

    @classmethod
    def uniform(cls, k: int) -> 'ProbDistribution':
        """Uniform distribution over k options"""
        return cls.renormalize(np.ones(k))

    @property
    def k(self) -> int:
        """Number of options"""
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        """
        Get the probabilities as a fresh numpy array

        Returns:
            np.ndarray: Float vector of length K
        """
        return np.array(self.probs, dtype=float)

    def to_list(self) -> list:
        return list(self.probs)


@dataclass(frozen=True)
class Ranking:
    """
    A permutation of option indices, best first
    """

    order: Tuple[int, ...]

    def __post_init__(self):
        """Validate that the order is a permutation of 0..K-1"""
        values = tuple(int(i) for i in self.order)
        object.__setattr__(self, 'order', values)

        if sorted(values) != list(range(len(values))):
            raise DistributionError(f"Ranking {values} is not a permutation of 0..{len(values) - 1}")

    @property
    def k(self) -> int:
        """Number of options"""
        return len(self.order)

    def to_list(self) -> list:
        return list(self.order)


def ranking_from_distribution(d: ProbDistribution) -> Ranking:
    """
    Derive a ranking by sorting options by descending probability

    Ties are broken by ascending option index so rankings are reproducible.

    Args:
        d: The distribution to rank

    Returns:
        Ranking: Option indices ordered from most to least probable
    """
    order = np.argsort(-d.as_array(), kind='stable')
    return Ranking(tuple(order.tolist()))

