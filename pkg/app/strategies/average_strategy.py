"""
Average Strategy - Mean reward across all groups
"""

from typing import Tuple

import numpy as np

from ..models.rollout import RewardMatrix
from .base_strategy import BaseStrategy
from .fairness import BRANCH_AVERAGE, average_agg


class AverageStrategy(BaseStrategy):
    """Utilitarian baseline: every item gets the mean of the group rewards"""

    label = "average"

    def combine(self, rewards: RewardMatrix) -> Tuple[np.ndarray, str]:
        return np.array([average_agg(column) for column in rewards.rewards.T]), BRANCH_AVERAGE
