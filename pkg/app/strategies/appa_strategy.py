"""
APPA Strategy - Fairness-gated adaptive aggregation driven by group reward history
"""

import logging
from dataclasses import replace
from typing import Tuple

import numpy as np

from ..models.rollout import RewardMatrix
from .base_strategy import BaseStrategy
from .fairness import AggregationResult, appa_aggregate, mean_effective_weights

logger = logging.getLogger(__name__)


class AppaStrategy(BaseStrategy):
    """
    Adaptive strategy

    While the rollout's Fairness Index is at least tau the plain mean is used; below it
    the reversed-softmax weights computed from the previous histories take over.
    """

    label = "appa"

    def combine(self, rewards: RewardMatrix) -> Tuple[np.ndarray, str]:
        state = self._ensure_state(rewards)
        aggregates, next_state = appa_aggregate(rewards, state, self.appa_config)
        return aggregates, next_state.last_branch

    def aggregate(self, rewards: RewardMatrix) -> AggregationResult:
        result = super().aggregate(rewards)
        effective = mean_effective_weights(self.state, rewards)
        logger.debug(f"Iteration {rewards.iteration}: effective weights {effective}")
        return replace(result, effective=effective)
