"""
Min Strategy - Optimize through the worst-off group
"""

import logging
from typing import Optional, Tuple

import numpy as np

from ..models.experiment import AppaConfig
from ..models.rollout import RewardMatrix
from .base_strategy import BaseStrategy
from .fairness import min_agg

logger = logging.getLogger(__name__)

GRANULARITY_ITEM = "item"
GRANULARITY_ITERATION = "iteration"


class MinStrategy(BaseStrategy):
    """
    Egalitarian baseline

    With item granularity each item gets the lowest group reward for that item. With
    iteration granularity the group with the lowest mean reward over the rollout is
    found and every item gets that group's reward.
    """

    label = "min"

    def __init__(self, appa_config: Optional[AppaConfig] = None, granularity: str = GRANULARITY_ITEM):
        super().__init__(appa_config)
        if granularity not in (GRANULARITY_ITEM, GRANULARITY_ITERATION):
            raise ValueError(f"Unknown min granularity: {granularity}")
        self.granularity = granularity
        if granularity == GRANULARITY_ITERATION:
            self.label = "min_iteration"

    def combine(self, rewards: RewardMatrix) -> Tuple[np.ndarray, str]:
        if self.granularity == GRANULARITY_ITEM:
            return np.array([min_agg(column) for column in rewards.rewards.T]), "min"

        worst = int(np.argmin(rewards.rewards.mean(axis=1)))
        logger.debug(f"Iteration {rewards.iteration}: worst group {rewards.groups[worst]}")
        return rewards.rewards[worst].copy(), f"min:{rewards.groups[worst]}"
