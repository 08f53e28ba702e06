"""
Policy package - tabular stand-in policy and its PPO trainer
"""

from .ppo import LossReport, TrainingError, ppo_update
from .tabular_policy import ReferencePolicy, TabularPolicy, Trajectory, ValueTable, rollout
