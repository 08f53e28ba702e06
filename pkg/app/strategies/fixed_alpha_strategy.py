"""
Fixed Alpha Strategy - Log-sum-exp welfare with a manually chosen alpha
"""

import math
from typing import Optional, Tuple

import numpy as np

from ..models.experiment import AppaConfig
from ..models.rollout import RewardMatrix
from .base_strategy import BaseStrategy
from .fairness import fixed_alpha_matrix


class FixedAlphaStrategy(BaseStrategy):
    """Aggregates every item with one scalar alpha; -inf is min, 0 is mean, +inf is max"""

    def __init__(self, appa_config: Optional[AppaConfig] = None, alpha: float = 0.0):
        super().__init__(appa_config)
        if alpha is None or math.isnan(alpha):
            raise ValueError("FixedAlphaStrategy needs a numeric alpha")
        self.alpha = float(alpha)
        if math.isinf(self.alpha):
            self.label = "alpha=inf" if self.alpha > 0 else "alpha=-inf"
        else:
            self.label = f"alpha={self.alpha:g}"

    def combine(self, rewards: RewardMatrix) -> Tuple[np.ndarray, str]:
        return fixed_alpha_matrix(self.alpha, rewards), self.label
