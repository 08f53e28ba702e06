"""
Base Strategy - Abstract base class for all reward aggregation strategies
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ..models.experiment import AppaConfig
from ..models.rollout import RewardMatrix
from .fairness import (
    AggregationResult,
    AggregationState,
    fairness_index,
    update_history,
)

logger = logging.getLogger(__name__)


class BaseStrategy(ABC):
    """
    Abstract base class for all aggregation strategies

    Every strategy tracks the EMA histories and the Fairness Index so runs can be
    compared on the same diagnostics; only the adaptive strategy uses the weights.
    """

    label = "base"

    def __init__(self, appa_config: Optional[AppaConfig] = None):
        """Initialize the strategy"""
        self.appa_config = appa_config or AppaConfig()
        self.strategy_name = self.__class__.__name__
        self.state: Optional[AggregationState] = None
        logger.debug(f"Initialized {self.strategy_name}")

    def reset(self, groups: Sequence[str]) -> AggregationState:
        """
        Start a fresh run for the given groups

        Args:
            groups: Group names in matrix row order

        Returns:
            AggregationState: The initial state
        """
        self.state = AggregationState.initial(groups, self.appa_config)
        return self.state

    def _ensure_state(self, rewards: RewardMatrix) -> AggregationState:
        if self.state is None or tuple(self.state.groups) != tuple(rewards.groups):
            self.reset(rewards.groups)
        return self.state

    @abstractmethod
    def combine(self, rewards: RewardMatrix) -> Tuple[np.ndarray, str]:
        """
        Collapse the groups x items matrix into one reward per item

        Args:
            rewards: Raw reward matrix of the iteration

        Returns:
            Tuple of (per-item aggregates, branch label)
        """
        pass

    def aggregate(self, rewards: RewardMatrix) -> AggregationResult:
        """
        Aggregate one iteration's rewards without committing state

        Args:
            rewards: Raw reward matrix of the iteration

        Returns:
            AggregationResult: Aggregates plus the pending next state
        """
        state = self._ensure_state(rewards)
        fi = fairness_index(rewards, self.appa_config)
        aggregates, branch = self.combine(rewards)
        next_state = update_history(state, rewards.mean_by_group(), self.appa_config)
        next_state = replace(next_state, last_fi=fi, last_branch=branch)
        return AggregationResult(
            aggregates=np.asarray(aggregates, dtype=float),
            fi=fi,
            branch=branch,
            weights=dict(state.weights),
            next_state=next_state,
        )

    def commit(self, result: AggregationResult) -> AggregationState:
        """
        Adopt the state produced by `aggregate`

        Called after the policy update of the iteration.
        """
        self.state = result.next_state
        return self.state

    def get_status(self) -> Dict[str, Any]:
        """
        Get the current status of the strategy

        Returns:
            Dict[str, Any]: Strategy name plus the last recorded state
        """
        status: Dict[str, Any] = {'name': self.label, 'class': self.strategy_name}
        if self.state is not None:
            status.update(self.state.to_dict())
        return status
