"""
Evaluation Models - Results of training runs and held-out evaluations
"""

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional


@dataclass
class EvaluationReport:
    """
    Alignment of one trained policy with every group on the test split

    Attributes:
        strategy: Strategy label of the run
        seed: Run seed
        metric: Metric the scores were computed with
        per_group_as: Mean metric reward of each group over test questions
        avg_as: Mean of the per-group scores
        min_as: Minimum of the per-group scores
        fi: Fairness Index of the per-question test rewards
        format_score: Mean format score of the evaluated outputs
    """

    strategy: str
    seed: int
    metric: str
    per_group_as: Dict[str, float]
    avg_as: float
    min_as: float
    fi: float
    format_score: float

    def __post_init__(self):
        if self.min_as > self.avg_as + 1e-12:
            raise ValueError(f"min_as {self.min_as} exceeds avg_as {self.avg_as}")
        for name in ('avg_as', 'min_as', 'fi', 'format_score'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    @property
    def spider(self) -> Dict[str, float]:
        """Per-group values for a radar chart"""
        return dict(self.per_group_as)

    def row(self) -> Dict[str, Any]:
        """One comparison-table row"""
        return {
            'strategy': self.strategy,
            'seed': self.seed,
            'metric': self.metric,
            'fi': self.fi,
            'avg_as': self.avg_as,
            'min_as': self.min_as,
            'format_score': self.format_score,
        }

    def to_dict(self) -> Dict[str, Any]:
        data = self.row()
        data['per_group_as'] = dict(self.per_group_as)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EvaluationReport':
        return cls(
            strategy=data['strategy'],
            seed=int(data['seed']),
            metric=data['metric'],
            per_group_as={g: float(v) for g, v in data['per_group_as'].items()},
            avg_as=float(data['avg_as']),
            min_as=float(data['min_as']),
            fi=float(data['fi']),
            format_score=float(data['format_score']),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class TrainingResult:
    """
    Outcome of one training run

    Attributes:
        strategy: Strategy label
        seed: Run seed
        iterations: Iterations completed
        output_dir: Run directory holding the logs and checkpoint
        fi_trace: Training-time FI of every iteration
        branch_trace: Aggregation branch of every iteration
        final_state: Last aggregation state snapshot
        success: False when the run aborted
        error: Error message of an aborted run
    """

    strategy: str
    seed: int
    iterations: int
    output_dir: str
    fi_trace: List[float] = field(default_factory=list)
    branch_trace: List[str] = field(default_factory=list)
    final_state: Dict[str, Any] = field(default_factory=dict)
    success: bool = True
    error: Optional[str] = None

    @property
    def first_fi(self) -> Optional[float]:
        return self.fi_trace[0] if self.fi_trace else None

    @property
    def last_fi(self) -> Optional[float]:
        return self.fi_trace[-1] if self.fi_trace else None

    def average_branch_in_tail(self, fraction: float = 0.1) -> bool:
        """True if the plain-average branch was taken at least once in the last `fraction` of iterations"""
        if not self.branch_trace:
            return False
        tail = max(1, int(round(len(self.branch_trace) * fraction)))
        return any(branch == 'average' for branch in self.branch_trace[-tail:])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'strategy': self.strategy,
            'seed': self.seed,
            'iterations': self.iterations,
            'output_dir': self.output_dir,
            'first_fi': self.first_fi,
            'last_fi': self.last_fi,
            'final_state': self.final_state,
            'success': self.success,
            'error': self.error,
        }
