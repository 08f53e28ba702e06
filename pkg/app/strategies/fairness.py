"""
Fairness - Reward aggregation functions, the Fairness Index and adaptive group weights

All functions here are pure. Rewards arrive as a groups x items matrix; every exp/log
goes through scipy's max-shifted logsumexp/softmax.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp, softmax

from ..models.experiment import AppaConfig
from ..models.rollout import RewardMatrix

logger = logging.getLogger(__name__)

BRANCH_AVERAGE = "average"
BRANCH_ADAPTIVE = "adaptive"

MatrixLike = Union[RewardMatrix, np.ndarray]


class AggregationError(ValueError):
    """Exception raised for invalid aggregation inputs"""
    pass


@dataclass(frozen=True)
class AggregationState:
    """
    Server-side fairness state carried across iterations

    Attributes:
        groups: Group order
        histories: EMA of each group's mean raw reward (h_g)
        weights: Adaptive weights for the next aggregation, computed from `histories`
        last_fi: Fairness Index of the most recent rollout
        last_branch: Branch the most recent aggregation took
        iteration: Number of history updates applied
    """

    groups: Tuple[str, ...]
    histories: Mapping[str, float]
    weights: Mapping[str, float]
    last_fi: float = 1.0
    last_branch: str = BRANCH_AVERAGE
    iteration: int = 0

    @classmethod
    def initial(cls, groups: Sequence[str], cfg: AppaConfig) -> 'AggregationState':
        """
        Fresh state: every history at 0 and uniform weights

        Args:
            groups: Group names
            cfg: Aggregation settings

        Returns:
            AggregationState: State before the first iteration
        """
        if not groups:
            raise AggregationError("Aggregation state needs at least one group")
        histories = {str(g): 0.0 for g in groups}
        state = cls(groups=tuple(str(g) for g in groups), histories=histories, weights={})
        return replace(state, weights=compute_weights(state, cfg))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iteration': self.iteration,
            'fi': self.last_fi,
            'branch': self.last_branch,
            'history': {g: self.histories[g] for g in self.groups},
            'alpha': {g: self.weights[g] for g in self.groups},
        }


def _as_matrix(rewards: MatrixLike) -> np.ndarray:
    values = rewards.rewards if isinstance(rewards, RewardMatrix) else np.asarray(rewards, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if values.ndim != 2 or values.shape[0] == 0:
        raise AggregationError(f"Rewards must be a non-empty groups x items matrix, got shape {values.shape}")
    return values


def _as_vector(rewards: Sequence[float]) -> np.ndarray:
    values = np.asarray(rewards, dtype=float).ravel()
    if values.size == 0:
        raise AggregationError("Cannot aggregate an empty reward vector")
    return values


def average_agg(rewards_for_item: Sequence[float]) -> float:
    """Arithmetic mean of one item's group rewards"""
    return float(np.mean(_as_vector(rewards_for_item)))


def min_agg(rewards_for_item: Sequence[float]) -> float:
    """Lowest group reward for one item"""
    return float(np.min(_as_vector(rewards_for_item)))


def fixed_alpha_agg(alpha: float, rewards: Sequence[float]) -> float:
    """
    Log-sum-exp social welfare with a fixed scalar alpha

    (1/alpha) * log(mean(exp(alpha * r))), with the mean at alpha = 0 and the
    min / max at alpha = -inf / +inf.

    Args:
        alpha: Aggregation parameter, finite or +/- inf
        rewards: One reward per group

    Returns:
        float: The aggregate
    """
    values = _as_vector(rewards)
    if math.isnan(alpha):
        raise AggregationError("alpha must not be NaN")
    if alpha == math.inf:
        return float(np.max(values))
    if alpha == -math.inf:
        return float(np.min(values))
    if alpha == 0.0:
        return float(np.mean(values))
    return float(logsumexp(alpha * values, b=1.0 / values.size) / alpha)


def fixed_alpha_matrix(alpha: float, rewards: MatrixLike) -> np.ndarray:
    """Apply `fixed_alpha_agg` to every item column"""
    values = _as_matrix(rewards)
    return np.array([fixed_alpha_agg(alpha, values[:, j]) for j in range(values.shape[1])])


def fairness_index(rewards: MatrixLike, cfg: AppaConfig) -> float:
    """
    Mean over items of 1 / (1 + CoV^2) of the group rewards

    Items whose mean reward is below mu_min are left out; a zero standard deviation
    gives 1; the CoV is capped at cov_max. With every item left out the index is 1.

    Args:
        rewards: Groups x items matrix of raw rewards
        cfg: Aggregation settings

    Returns:
        float: Fairness Index in [0, 1]
    """
    values = _as_matrix(rewards)
    mu = values.mean(axis=0)
    sigma = values.std(axis=0)
    included = mu >= cfg.mu_min
    if not np.any(included):
        return 1.0

    mu, sigma = mu[included], sigma[included]
    cov = np.zeros_like(mu)
    spread = sigma > 0.0
    cov[spread] = np.minimum(sigma[spread] / mu[spread], cfg.cov_max)
    return float(np.mean(1.0 / (1.0 + cov ** 2)))


def compute_weights(state: AggregationState, cfg: AppaConfig) -> Dict[str, float]:
    """
    Reversed softmax over the group histories

    alpha_g = softmax((1 - h_g) / T); groups with lower history get larger weight.

    Args:
        state: State holding the histories to weight
        cfg: Aggregation settings

    Returns:
        Dict[str, float]: Strictly positive weights summing to 1
    """
    h = np.array([state.histories[g] for g in state.groups], dtype=float)
    alpha = softmax((1.0 - h) / cfg.temperature)
    return {g: float(a) for g, a in zip(state.groups, alpha)}


def update_history(state: AggregationState, mean_rewards: Mapping[str, float], cfg: AppaConfig) -> AggregationState:
    """
    EMA step of every group history, followed by a weight refresh

    h_g <- lambda * h_g + (1 - lambda) * mean_g. The returned state carries the weights
    for the next iteration.

    Args:
        state: Current state
        mean_rewards: Raw (unwhitened) mean reward of each group this iteration
        cfg: Aggregation settings

    Returns:
        AggregationState: New state with iteration advanced

    Raises:
        AggregationError: If a group is missing or a mean is outside [0, 1]
    """
    lam = cfg.lambda_ema
    histories = {}
    for g in state.groups:
        if g not in mean_rewards:
            raise AggregationError(f"No mean reward for group {g}")
        r = float(mean_rewards[g])
        if not 0.0 <= r <= 1.0:
            raise AggregationError(f"Mean reward {r} for group {g} is outside [0, 1]")
        histories[g] = lam * state.histories[g] + (1.0 - lam) * r

    updated = replace(state, histories=histories, iteration=state.iteration + 1)
    return replace(updated, weights=compute_weights(updated, cfg))


def adaptive_aggregate(alpha: Sequence[float], rewards: MatrixLike) -> np.ndarray:
    """
    Per-item log(mean_g exp(alpha_g * r_g))

    Args:
        alpha: One weight per group row
        rewards: Groups x items matrix

    Returns:
        np.ndarray: One aggregate per item
    """
    values = _as_matrix(rewards)
    weights = np.asarray(alpha, dtype=float).reshape(-1, 1)
    if weights.shape[0] != values.shape[0]:
        raise AggregationError(f"{weights.shape[0]} weights for {values.shape[0]} groups")
    return logsumexp(weights * values, axis=0, b=1.0 / values.shape[0])


def appa_aggregate(rewards: RewardMatrix,
                   state: AggregationState,
                   cfg: AppaConfig) -> Tuple[np.ndarray, AggregationState]:
    """
    Fairness-gated adaptive aggregation of one rollout

    One FI is computed for the whole rollout. At or above tau every item gets the plain
    mean; below it every item gets the adaptive aggregate under the state's weights.
    The state is not modified; the returned state has the histories updated with this
    rollout's raw group means and should be committed after the policy update.

    Args:
        rewards: Reward matrix of the iteration
        state: State whose weights were computed from the previous histories
        cfg: Aggregation settings

    Returns:
        Tuple of (per-item aggregates, next state)

    Raises:
        AggregationError: If the matrix and state disagree on the groups
    """
    if tuple(rewards.groups) != tuple(state.groups):
        raise AggregationError(f"Reward groups {rewards.groups} do not match state groups {state.groups}")

    fi = fairness_index(rewards, cfg)
    if fi >= cfg.tau:
        branch = BRANCH_AVERAGE
        aggregates = rewards.rewards.mean(axis=0)
    else:
        branch = BRANCH_ADAPTIVE
        alpha = [state.weights[g] for g in state.groups]
        aggregates = adaptive_aggregate(alpha, rewards)

    aggregates = np.clip(aggregates, 0.0, 1.0)
    next_state = update_history(state, rewards.mean_by_group(), cfg)
    next_state = replace(next_state, last_fi=fi, last_branch=branch)
    logger.debug(f"Iteration {rewards.iteration}: FI={fi:.4f} branch={branch}")
    return aggregates, next_state


def effective_weights(alpha: Mapping[str, float], item_rewards: Mapping[str, float]) -> Dict[str, float]:
    """
    Gradient of the adaptive aggregate with respect to each group reward

    w_g = alpha_g * exp(alpha_g r_g) / sum_g' exp(alpha_g' r_g'). Diagnostic only.

    Args:
        alpha: Group weights
        item_rewards: Rewards of one item

    Returns:
        Dict[str, float]: Effective weight per group
    """
    groups = list(alpha.keys())
    missing = [g for g in groups if g not in item_rewards]
    if missing:
        raise AggregationError(f"No reward for groups {missing}")
    a = np.array([alpha[g] for g in groups], dtype=float)
    r = np.array([item_rewards[g] for g in groups], dtype=float)
    w = a * softmax(a * r)
    return {g: float(v) for g, v in zip(groups, w)}


def mean_effective_weights(state: AggregationState, rewards: RewardMatrix) -> Dict[str, float]:
    """Effective weights averaged over the items of a rollout"""
    a = np.array([state.weights[g] for g in state.groups], dtype=float).reshape(-1, 1)
    w = a * softmax(a * rewards.rewards, axis=0)
    return {g: float(v) for g, v in zip(state.groups, w.mean(axis=1))}


@dataclass(frozen=True, eq=False)
class AggregationResult:
    """
    Output of one strategy application

    Attributes:
        aggregates: One reward per rollout item
        fi: Fairness Index of the rollout's raw rewards
        branch: Which rule produced the aggregates
        weights: Group weights in force for this aggregation
        next_state: State to commit once the policy update is done
        effective: Mean effective weight per group (adaptive strategy only)
    """

    aggregates: np.ndarray
    fi: float
    branch: str
    weights: Mapping[str, float]
    next_state: AggregationState
    effective: Optional[Mapping[str, float]] = field(default=None)
