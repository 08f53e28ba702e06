"""
Reward Metrics - Compare a policy output to a group target, normalized to [0, 1]

Higher is better for every metric. JS, Wasserstein and cosine compare distributions;
Borda compares rankings.
"""

import logging
from enum import Enum
from typing import Sequence, Union

import numpy as np
from scipy.special import rel_entr

from ..models.distribution import ProbDistribution, Ranking, ranking_from_distribution
from ..models.rollout import TaskMode

logger = logging.getLogger(__name__)

VectorLike = Union[ProbDistribution, Sequence[float], np.ndarray]
RankingLike = Union[Ranking, Sequence[int]]


class MetricError(ValueError):
    """Exception raised for incompatible metric inputs"""
    pass


class MetricKind(Enum):
    """Enum representing the reward metrics"""
    JS = "js"
    WASSERSTEIN = "wasserstein"
    COSINE = "cosine"
    BORDA = "borda"

    @property
    def task_mode(self) -> TaskMode:
        """The task whose outputs this metric scores"""
        return TaskMode.OPA if self is MetricKind.BORDA else TaskMode.DPA

    @classmethod
    def for_task(cls, task_mode: TaskMode) -> list:
        """All metrics that apply to a task"""
        return [kind for kind in cls if kind.task_mode is task_mode]


def _as_vector(value: VectorLike) -> np.ndarray:
    if isinstance(value, ProbDistribution):
        return value.as_array()
    return np.asarray(value, dtype=float)


def _as_order(value: RankingLike) -> np.ndarray:
    if isinstance(value, Ranking):
        return np.asarray(value.order, dtype=int)
    return np.asarray(value, dtype=int)


def _check_lengths(pred: np.ndarray, target: np.ndarray) -> None:
    if pred.ndim != 1 or target.ndim != 1 or pred.shape != target.shape:
        raise MetricError(f"Length mismatch: {pred.shape} vs {target.shape}")


def js_reward(pred: VectorLike, target: VectorLike) -> float:
    """
    One minus the base-2 Jensen-Shannon divergence

    Zero-probability terms contribute nothing to the KL sums.

    Args:
        pred: Policy distribution
        target: Group target distribution

    Returns:
        float: Reward in [0, 1]; 1 for identical distributions
    """
    p, q = _as_vector(pred), _as_vector(target)
    _check_lengths(p, q)
    m = 0.5 * (p + q)
    jsd = (0.5 * np.sum(rel_entr(p, m)) + 0.5 * np.sum(rel_entr(q, m))) / np.log(2.0)
    return float(1.0 - np.clip(jsd, 0.0, 1.0))


def wasserstein_reward(pred: VectorLike, target: VectorLike) -> float:
    """
    One minus the 1-Wasserstein distance on the option line 0..K-1, scaled by K-1

    Args:
        pred: Policy distribution
        target: Group target distribution

    Returns:
        float: Reward in [0, 1]

    Raises:
        MetricError: On a length mismatch or K = 1
    """
    p, q = _as_vector(pred), _as_vector(target)
    _check_lengths(p, q)
    k = p.size
    if k < 2:
        raise MetricError("Wasserstein reward needs K >= 2")
    w1 = float(np.sum(np.abs(np.cumsum(p - q))))
    return float(np.clip(1.0 - w1 / (k - 1), 0.0, 1.0))


def cosine_reward(pred: VectorLike, target: VectorLike) -> float:
    """
    Cosine similarity mapped from [-1, 1] to [0, 1]

    Args:
        pred: Policy distribution
        target: Group target distribution

    Returns:
        float: (1 + cos) / 2
    """
    p, q = _as_vector(pred), _as_vector(target)
    _check_lengths(p, q)
    norms = np.linalg.norm(p) * np.linalg.norm(q)
    if norms == 0.0:
        raise MetricError("Cosine reward is undefined for zero vectors")
    cosine = float(np.dot(p, q) / norms)
    return float(np.clip((1.0 + cosine) / 2.0, 0.0, 1.0))


def borda_reward(pred: RankingLike, target: RankingLike) -> float:
    """
    Position-weighted agreement between two rankings

    Position k (1-based) carries weight K-k+1; the total is divided by K(K+1)/2.

    Args:
        pred: Policy ranking
        target: Group target ranking

    Returns:
        float: Reward in [0, 1]

    Raises:
        MetricError: On a length mismatch or if either input is not a permutation
    """
    a, b = _as_order(pred), _as_order(target)
    _check_lengths(a, b)
    k = a.size
    for order in (a, b):
        if sorted(order.tolist()) != list(range(k)):
            raise MetricError(f"Not a permutation: {order.tolist()}")
    weights = np.arange(k, 0, -1, dtype=float)
    return float(np.sum(weights * (a == b)) / (k * (k + 1) / 2.0))


def metric_reward(kind: MetricKind,
                  pred: Union[ProbDistribution, Ranking],
                  target: ProbDistribution) -> float:
    """
    Score an output against a distribution target with the chosen metric

    Borda derives the target ranking from the target distribution.

    Args:
        kind: Metric to apply
        pred: Parsed policy output (distribution for DPA metrics, ranking for Borda)
        target: Group target distribution

    Returns:
        float: Metric reward in [0, 1]
    """
    if kind is MetricKind.BORDA:
        if not isinstance(pred, Ranking):
            raise MetricError("Borda reward needs a ranking output")
        return borda_reward(pred, ranking_from_distribution(target))
    if not isinstance(pred, ProbDistribution):
        raise MetricError(f"{kind.value} reward needs a distribution output")
    if kind is MetricKind.JS:
        return js_reward(pred, target)
    if kind is MetricKind.WASSERSTEIN:
        return wasserstein_reward(pred, target)
    return cosine_reward(pred, target)
