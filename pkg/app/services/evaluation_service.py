"""
Evaluation Service - Alignment scores of a trained policy on the held-out questions
"""

import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..models.dataset import PreferenceDataset
from ..models.evaluation import EvaluationReport
from ..models.experiment import AppaConfig
from ..models.rollout import TaskMode
from ..policy.tabular_policy import TabularPolicy, greedy_outputs, sampled_outputs
from ..strategies.fairness import fairness_index
from ..utils.metrics import MetricKind, metric_reward
from ..utils.response_format import FormatReport, parse_dpa, parse_opa

logger = logging.getLogger(__name__)


class EvaluationError(ValueError):
    """Exception raised when an evaluation precondition fails"""
    pass


def parse_output(dataset: PreferenceDataset, task_mode: TaskMode, question_id: str, response: str) -> FormatReport:
    question = dataset.question(question_id)
    if task_mode is TaskMode.DPA:
        return parse_dpa(response, question.k)
    return parse_opa(response, question.option_labels)


def question_rewards(outputs: Mapping[str, str], dataset: PreferenceDataset, group: str,
                     metric: MetricKind, question_ids: Sequence[str]) -> np.ndarray:
    """
    Raw metric reward of a group on each question, no format blending

    Unusable outputs score 0.

    Raises:
        EvaluationError: If an output is missing
    """
    rewards = []
    for qid in question_ids:
        if qid not in outputs:
            raise EvaluationError(f"No output for question {qid}")
        report = parse_output(dataset, metric.task_mode, qid, outputs[qid])
        if report.parsed_value is None:
            rewards.append(0.0)
        else:
            rewards.append(metric_reward(metric, report.parsed_value, dataset.target(group, qid)))
    return np.array(rewards, dtype=float)


def group_alignment_score(outputs: Mapping[str, str], dataset: PreferenceDataset, group: str,
                          metric: MetricKind, test_ids: Optional[Sequence[str]] = None) -> float:
    """
    Mean metric reward of one group over the test questions

    Args:
        outputs: Answer line per question id
        dataset: Dataset holding the group's targets
        group: Group to score
        metric: Metric kind
        test_ids: Questions to score; the dataset's test split when omitted

    Returns:
        float: Alignment score in [0, 1]

    Raises:
        EvaluationError: On an empty test set or a missing output
    """
    test_ids = list(dataset.question_set.test_ids if test_ids is None else test_ids)
    if not test_ids:
        raise EvaluationError("Cannot score an empty test set")
    return float(question_rewards(outputs, dataset, group, metric, test_ids).mean())


def summarize(per_group: Mapping[str, float]) -> Tuple[float, float]:
    """
    Mean and minimum of per-group alignment scores

    Args:
        per_group: Alignment score per group

    Returns:
        Tuple of (avg_as, min_as)
    """
    if not per_group:
        raise EvaluationError("Cannot summarize an empty score map")
    values = np.array(list(per_group.values()), dtype=float)
    return float(values.mean()), float(values.min())


def evaluate_outputs(outputs: Mapping[str, str], dataset: PreferenceDataset, metric: MetricKind,
                     strategy: str, seed: int, appa_config: Optional[AppaConfig] = None) -> EvaluationReport:
    """
    Evaluate answer lines for the test split under one metric

    FI is computed by the same code path the server uses for gating, on the
    groups x test-questions matrix of raw metric rewards.

    Raises:
        EvaluationError: If outputs cover training questions or miss test questions
    """
    test_ids = list(dataset.question_set.test_ids)
    if not test_ids:
        raise EvaluationError("Dataset has no test questions")
    leaked = set(outputs) - set(test_ids)
    if leaked:
        raise EvaluationError(f"Evaluation outputs include non-test questions: {sorted(leaked)}")

    matrix = np.vstack([question_rewards(outputs, dataset, g, metric, test_ids) for g in dataset.groups])
    per_group = {str(g): float(row.mean()) for g, row in zip(dataset.groups, matrix)}
    avg_as, min_as = summarize(per_group)
    fi = fairness_index(matrix, appa_config or AppaConfig())
    format_score = float(np.mean([parse_output(dataset, metric.task_mode, qid, outputs[qid]).score
                                  for qid in test_ids]))
    return EvaluationReport(strategy=strategy, seed=seed, metric=metric.value, per_group_as=per_group,
                            avg_as=avg_as, min_as=min(min_as, avg_as), fi=fi, format_score=format_score)


class EvaluationService:
    """
    Service for held-out evaluation of trained policies
    """

    def __init__(self):
        """Initialize the evaluation service"""
        logger.info("EvaluationService initialized")

    def policy_outputs(self, policy: TabularPolicy, dataset: PreferenceDataset,
                       sampling: bool = False, seed: int = 0) -> Dict[str, str]:
        """Answer lines for the test questions, greedy unless sampling is requested"""
        questions = dataset.question_set.test_questions()
        if sampling:
            return sampled_outputs(policy, questions, seed)
        return greedy_outputs(policy, questions)

    def evaluate(self, policy: TabularPolicy, dataset: PreferenceDataset, strategy: str, seed: int,
                 metrics: Optional[Sequence[MetricKind]] = None, sampling: bool = False,
                 appa_config: Optional[AppaConfig] = None) -> List[EvaluationReport]:
        """
        Evaluate a policy on the test split under every metric of its task

        Args:
            policy: Trained policy
            dataset: Dataset with targets
            strategy: Strategy label for the report rows
            seed: Run seed
            metrics: Metrics to report; all metrics of the task when omitted
            sampling: Sample instead of greedy decoding
            appa_config: FI safeguards

        Returns:
            List[EvaluationReport]: One report per metric
        """
        metrics = list(metrics) if metrics else MetricKind.for_task(policy.task_mode)
        outputs = self.policy_outputs(policy, dataset, sampling, seed)
        reports = [evaluate_outputs(outputs, dataset, metric, strategy, seed, appa_config) for metric in metrics]
        for report in reports:
            logger.info(f"[{strategy}] seed={seed} {report.metric}: AvgAS={report.avg_as:.4f} "
                        f"MinAS={report.min_as:.4f} FI={report.fi:.4f}")
        return reports
