"""
Rollout Model - Items sent to groups and the rewards they send back
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .distribution import ProbDistribution, Ranking


class TaskMode(Enum):
    """Enum representing the alignment task"""
    DPA = "DPA"  # distributional: predict a probability vector
    OPA = "OPA"  # ordinal: predict a ranking


@dataclass(frozen=True)
class RolloutItem:
    """
    A policy response to one question, as seen after parsing

    Attributes:
        question_id: Question answered
        raw_response: Text in the response grammar
        parsed: Parsed value, absent when nothing usable was recovered
        format_score: Validity of the text against the grammar, in [0, 1]
    """

    question_id: str
    raw_response: str
    parsed: Optional[Union[ProbDistribution, Ranking]] = None
    format_score: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.format_score <= 1.0:
            raise ValueError(f"Format score must be in [0, 1], got {self.format_score}")


@dataclass(frozen=True)
class RolloutBroadcast:
    """What the server sends every group in one iteration"""

    iteration: int
    task_mode: TaskMode
    items: Tuple[Tuple[str, str], ...]  # (question id, raw response)

    def __post_init__(self):
        object.__setattr__(self, 'items', tuple((str(q), str(r)) for q, r in self.items))

    def __len__(self) -> int:
        return len(self.items)

    def question_ids(self) -> List[str]:
        return [question_id for question_id, _ in self.items]


@dataclass(frozen=True)
class RewardReport:
    """Per-item rewards one group returns for a broadcast"""

    group: str
    iteration: int
    rewards: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(r) for r in self.rewards)
        object.__setattr__(self, 'rewards', values)
        for r in values:
            if not (0.0 <= r <= 1.0):
                raise ValueError(f"Reward {r} from group {self.group} is outside [0, 1]")


@dataclass(frozen=True, eq=False)
class RewardMatrix:
    """
    Group x item rewards received by the server in one iteration

    Attributes:
        iteration: Iteration index t
        groups: Row labels
        rewards: Array of shape (groups, items), values in [0, 1]
    """

    iteration: int
    groups: Tuple[str, ...]
    rewards: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.rewards, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"Reward matrix must be 2-D, got shape {values.shape}")
        if values.shape[0] != len(self.groups):
            raise ValueError(f"Reward matrix has {values.shape[0]} rows for {len(self.groups)} groups")
        if not np.all(np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("Reward matrix values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, 'groups', tuple(self.groups))
        object.__setattr__(self, 'rewards', values)

    @classmethod
    def from_reports(cls, iteration: int, groups: Sequence[str], reports: Sequence[RewardReport],
                     n_items: int) -> 'RewardMatrix':
        """
        Assemble a matrix from one report per group

        Args:
            iteration: Iteration the reports must belong to
            groups: Row order
            reports: One report per group, any order
            n_items: Number of broadcast items

        Returns:
            RewardMatrix: The assembled matrix

        Raises:
            ValueError: If a report is missing, duplicated, stale or the wrong length
        """
        by_group: Dict[str, RewardReport] = {}
        for report in reports:
            if report.group in by_group:
                raise ValueError(f"Duplicate report from group {report.group}")
            by_group[report.group] = report

        rows = []
        for g in groups:
            report = by_group.get(g)
            if report is None:
                raise ValueError(f"No report from group {g}")
            if report.iteration != iteration:
                raise ValueError(f"Report from {g} is for iteration {report.iteration}, expected {iteration}")
            if len(report.rewards) != n_items:
                raise ValueError(f"Report from {g} has {len(report.rewards)} rewards, expected {n_items}")
            rows.append(report.rewards)
        return cls(iteration=iteration, groups=tuple(groups), rewards=np.array(rows, dtype=float).reshape(len(groups), n_items))

    @property
    def n_items(self) -> int:
        return self.rewards.shape[1]

    def mean_by_group(self) -> Dict[str, float]:
        """
        Mean reward of each group over the rollout

        Returns:
            Dict[str, float]: Group name to mean raw reward
        """
        means = self.rewards.mean(axis=1)
        return {g: float(m) for g, m in zip(self.groups, means)}

    def equals(self, other: 'RewardMatrix') -> bool:
        """Exact (bitwise) equality with another matrix"""
        return (self.iteration == other.iteration and self.groups == other.groups
                and np.array_equal(self.rewards, other.rewards))
