"""
Data models package
"""

from .distribution import DistributionError, ProbDistribution, Ranking, ranking_from_distribution
from .dataset import DatasetError, GroupId, PreferenceDataset, Question, QuestionSet
from .rollout import RewardMatrix, RewardReport, RolloutBroadcast, RolloutItem, TaskMode
