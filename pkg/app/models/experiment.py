"""
Experiment Models - Pydantic models for experiment configuration files
"""

import json
import math
import os
from typing import Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from .rollout import TaskMode
from ..utils.metrics import MetricKind


class AppaConfig(BaseModel):
    """Hyperparameters of adaptive aggregation"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    lambda_ema: float = Field(0.8, ge=0.0, lt=1.0, description="EMA decay of group histories")
    temperature: float = Field(0.1, gt=0.0, description="Reversed-softmax temperature")
    tau: float = Field(0.99, gt=0.0, le=1.0, description="Fairness Index threshold for plain averaging")
    mu_min: float = Field(1e-6, ge=0.0, description="Questions with mean reward below this are skipped by FI")
    cov_max: float = Field(10.0, gt=0.0, description="Cap on the coefficient of variation")


class PPOConfig(BaseModel):
    """PPO configuration and hyperparameters"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    kl_coef: float = Field(0.05, ge=0.0, description="KL penalty coefficient (beta)")
    clip_range: float = Field(0.2, gt=0.0, description="Policy ratio clip (epsilon)")
    clip_range_value: float = Field(0.2, gt=0.0, description="Value clip range")
    vf_coef: float = Field(0.2, ge=0.0, description="Value loss coefficient (c1)")
    entropy_coef: float = Field(0.0, ge=0.0, description="Entropy bonus coefficient (c2)")
    gamma: float = Field(1.0, ge=0.0, le=1.0, description="Discount factor")
    gae_lambda: float = Field(0.95, ge=0.0, le=1.0, description="GAE lambda")
    ppo_epochs: int = Field(2, ge=1, description="Passes over each rollout batch")
    minibatches: int = Field(8, ge=1, description="Minibatches per epoch")
    learning_rate: float = Field(1e-5, gt=0.0, description="Gradient descent step size")
    reward_clamp: float = Field(5.0, gt=0.0, description="Whitened rewards are clamped to +/- this")
    whiten_before_shaping: bool = Field(True, description="Whiten terminal rewards before adding KL shaping")
    kl_estimator: Literal['log_ratio', 'full'] = Field('log_ratio', description="Per-step KL penalty form")


class PolicyConfig(BaseModel):
    """Tabular policy configuration"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    bins: int = Field(11, ge=2, description="Probability-weight grid size for DPA actions")
    temperature: float = Field(0.6, gt=0.0, description="Sampling temperature")
    table_key: Literal['question', 'option_count'] = Field('question', description="What the parameter tables are keyed by")
    init_scale: float = Field(0.0, ge=0.0, description="Std of Gaussian initial logits; 0 gives uniform")


class DatasetSpec(BaseModel):
    """Dataset file or synthetic generator settings"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    path: Optional[str] = Field(None, description="NDJSON dataset file; the generator is used when absent")
    groups: int = Field(8, ge=1, description="Number of groups")
    questions: int = Field(60, ge=1, description="Number of questions")
    min_options: int = Field(3, ge=2, le=26, description="Smallest option count")
    max_options: int = Field(5, ge=2, le=26, description="Largest option count")
    heterogeneity: float = Field(0.7, ge=0.0, le=1.0, description="Cross-group target divergence (eta)")
    profile_concentration: float = Field(20.0, gt=0.0, description="How tightly group draws follow the group profile")
    profile_prior: float = Field(0.3, gt=0.0, description="Dirichlet parameter of group profiles; below 1 concentrates each profile on few options")
    seed: int = Field(0, description="Generator seed")

    @model_validator(mode='after')
    def check_option_range(self) -> 'DatasetSpec':
        if self.min_options > self.max_options:
            raise ValueError(f"min_options {self.min_options} exceeds max_options {self.max_options}")
        if self.path is not None and not os.path.exists(self.path):
            raise ValueError(f"Dataset file not found: {self.path}")
        return self


class StrategySpec(BaseModel):
    """Aggregation strategy selection"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    name: Literal['average', 'min', 'fixed_alpha', 'appa'] = Field('appa', description="Strategy type")
    alpha: Optional[float] = Field(None, description="Fixed alpha; 'inf' and '-inf' select max and min")
    min_granularity: Literal['item', 'iteration'] = Field('item', description="Per-item minimum or worst group of the rollout")

    @field_validator('alpha', mode='before')
    @classmethod
    def parse_alpha(cls, value: Any) -> Any:
        if isinstance(value, str):
            text = value.strip().lower()
            if text in ('inf', '+inf', 'infinity', 'max'):
                return math.inf
            if text in ('-inf', '-infinity', 'min'):
                return -math.inf
        return value

    @field_serializer('alpha')
    def serialize_alpha(self, value: Optional[float]) -> Optional[Union[float, str]]:
        if value is not None and math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value

    @model_validator(mode='after')
    def check_alpha(self) -> 'StrategySpec':
        if self.name == 'fixed_alpha':
            if self.alpha is None or math.isnan(self.alpha):
                raise ValueError("fixed_alpha strategy needs an alpha")
        return self

    @property
    def label(self) -> str:
        """Short name used in reports"""
        if self.name == 'fixed_alpha':
            if math.isinf(self.alpha):
                return "alpha=inf" if self.alpha > 0 else "alpha=-inf"
            return f"alpha={self.alpha:g}"
        if self.name == 'min' and self.min_granularity == 'iteration':
            return 'min_iteration'
        return self.name

    @classmethod
    def parse(cls, text: str) -> 'StrategySpec':
        """
        Parse a CLI strategy label

        Accepts "average", "min", "min_iteration", "appa" and "alpha=<value>".
        """
        text = text.strip()
        if text.startswith('alpha='):
            return cls(name='fixed_alpha', alpha=text.split('=', 1)[1])
        if text == 'min_iteration':
            return cls(name='min', min_granularity='iteration')
        return cls(name=text)


def _harness_policy() -> PolicyConfig:
    return PolicyConfig(table_key='option_count')


class ExperimentConfig(BaseModel):
    """Full description of one training run"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    task_mode: TaskMode = Field(TaskMode.DPA, description="DPA or OPA")
    metric: MetricKind = Field(MetricKind.JS, description="Training reward metric")
    strategy: StrategySpec = Field(default_factory=StrategySpec)
    appa: AppaConfig = Field(default_factory=AppaConfig)
    ppo: PPOConfig = Field(default_factory=PPOConfig)
    policy: PolicyConfig = Field(default_factory=_harness_policy)
    iterations: int = Field(200, ge=0, description="Training iterations")
    omega: float = Field(0.85, ge=0.0, le=1.0, description="Metric weight in the final reward")
    split_ratio: float = Field(0.8, gt=0.0, lt=1.0, description="Fraction of questions used for training")
    seed: int = Field(0, description="Run seed")
    output_dir: str = Field('runs', description="Directory for logs, checkpoints and reports")
    transport: Literal['inproc', 'tcp', 'remote'] = Field('inproc', description="Federation transport; remote waits for serve-client processes")
    report_deadline: Optional[float] = Field(None, gt=0.0, description="Seconds to wait for reports; None uses the transport default")
    log_every: int = Field(10, ge=1, description="Iterations between console summaries")
    eval_sampling: bool = Field(False, description="Sample instead of greedy decoding at evaluation")

    @model_validator(mode='after')
    def check_metric_task(self) -> 'ExperimentConfig':
        if self.metric.task_mode is not self.task_mode:
            raise ValueError(f"Metric {self.metric.value} does not apply to task {self.task_mode.value}")
        return self

    @classmethod
    def from_file(cls, path: str) -> 'ExperimentConfig':
        """
        Load and validate a JSON configuration file

        Args:
            path: Path to the JSON document

        Returns:
            ExperimentConfig: Validated configuration
        """
        with open(path, 'r', encoding='utf-8') as f:
            return cls.model_validate_json(f.read())

    def with_overrides(self, **updates: Any) -> 'ExperimentConfig':
        """
        Copy with some top-level fields replaced, re-validating the result

        Args:
            **updates: Field values to replace; None values are ignored

        Returns:
            ExperimentConfig: The new configuration
        """
        data = json.loads(self.model_dump_json())
        for key, value in updates.items():
            if value is None:
                continue
            if isinstance(value, BaseModel):
                value = json.loads(value.model_dump_json())
            data[key] = value
        return ExperimentConfig.model_validate(data)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def to_dict(self) -> Dict[str, Any]:
        return json.loads(self.model_dump_json())
