"""
Training Service - The federated PPO loop: rollout, round, shaping, update, history
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from ..api.transports import Transport
from ..models.dataset import PreferenceDataset, Question
from ..models.evaluation import TrainingResult
from ..models.experiment import ExperimentConfig, PPOConfig
from ..models.rollout import TaskMode
from ..policy.ppo import ppo_update
from ..policy.tabular_policy import ReferencePolicy, TabularPolicy, ValueTable, rollout, save_checkpoint
from ..strategies import create_strategy
from ..strategies.base_strategy import BaseStrategy
from ..utils.response_format import parse_dpa, parse_opa
from .federation_service import FederationService, build_clients, run_round

logger = logging.getLogger(__name__)

TRAINING_LOG = "training_log.jsonl"
DIAGNOSTICS_LOG = "aggregation_diagnostics.jsonl"
CHECKPOINT = "checkpoint.json"
CONFIG_COPY = "config.json"


def write_jsonl(handle: Optional[TextIO], record: Dict[str, Any]) -> None:
    """Append one record with sorted keys"""
    if handle is not None:
        handle.write(json.dumps(record, sort_keys=True) + "\n")


def format_scores(policy: TabularPolicy, questions: Sequence[Question], responses: Sequence[str]) -> List[float]:
    """Format score of each response, as the server can check it without targets"""
    scores = []
    for q, response in zip(questions, responses):
        if policy.task_mode is TaskMode.DPA:
            scores.append(parse_dpa(response, q.k).score)
        else:
            scores.append(parse_opa(response, q.option_labels).score)
    return scores


def run_training(policy: TabularPolicy,
                 reference: TabularPolicy,
                 value_table: ValueTable,
                 transport: Transport,
                 strategy: BaseStrategy,
                 questions: Sequence[Question],
                 ppo_config: PPOConfig,
                 iterations: int,
                 seed: int,
                 log_file: Optional[TextIO] = None,
                 diagnostics_file: Optional[TextIO] = None,
                 log_every: int = 10) -> List[Dict[str, Any]]:
    """
    Run the training loop in place on `policy` and `value_table`

    Per iteration: rollout, federation round, PPO update on the aggregated rewards,
    then the aggregation history is committed.

    Args:
        policy: Policy to train
        reference: Frozen reference for the KL terms
        value_table: Value estimates to train
        transport: Connection to the groups
        strategy: Aggregation strategy, reset to the transport's groups
        questions: Training questions
        ppo_config: PPO settings
        iterations: Number of iterations
        seed: Run seed; every rollout and minibatch shuffle derives from it
        log_file: Training log handle
        diagnostics_file: Aggregation diagnostics handle
        log_every: Iterations between console summaries

    Returns:
        List[Dict[str, Any]]: One training-log record per iteration
    """
    strategy.reset(transport.groups)
    master = np.random.default_rng(seed)
    records: List[Dict[str, Any]] = []

    for t in range(iterations):
        rollout_seed = int(master.integers(2 ** 32))
        update_rng = np.random.default_rng(int(master.integers(2 ** 32)))

        trajectories, broadcast = rollout(policy, questions, rollout_seed, t, reference, value_table)
        aggregates, matrix, result = run_round(transport, broadcast, strategy)
        for traj, reward in zip(trajectories, aggregates):
            traj.terminal_reward = float(reward)

        _, _, losses = ppo_update(policy, value_table, trajectories, ppo_config, update_rng, t)
        state = strategy.commit(result)

        record = {
            'iteration': t,
            'fi': result.fi,
            'branch': result.branch,
            'alpha': {g: result.weights[g] for g in matrix.groups},
            'history': {g: state.histories[g] for g in matrix.groups},
            'mean_reward': matrix.mean_by_group(),
            'mean_aggregate': float(np.mean(aggregates)),
            'losses': losses.to_dict(),
            'mean_kl': float(np.mean([traj.kl_full.sum() for traj in trajectories])),
            'format_score': float(np.mean(format_scores(policy, questions, [tr.response for tr in trajectories]))),
        }
        records.append(record)
        write_jsonl(log_file, record)

        snapshot = state.to_dict()
        snapshot['alpha_used'] = record['alpha']
        if result.effective is not None:
            snapshot['effective_weights'] = dict(result.effective)
        write_jsonl(diagnostics_file, snapshot)

        if (t + 1) % log_every == 0 or t == iterations - 1:
            worst = min(record['mean_reward'].values())
            logger.info(f"[{strategy.label}] iteration {t + 1}/{iterations}: FI={result.fi:.4f} "
                        f"branch={result.branch} mean={record['mean_aggregate']:.4f} worst={worst:.4f}")
    return records


class TrainingService:
    """
    Service for training one policy under one aggregation strategy
    """

    def __init__(self, federation_service: Optional[FederationService] = None):
        """Initialize the training service"""
        self.federation_service = federation_service or FederationService()
        logger.info("TrainingService initialized")

    def train(self, experiment: ExperimentConfig, dataset: PreferenceDataset,
              out_dir: str) -> Tuple[TrainingResult, TabularPolicy, ValueTable]:
        """
        Train a policy and write its logs and checkpoint

        Writes training_log.jsonl, aggregation_diagnostics.jsonl, checkpoint.json and
        config.json to `out_dir`.

        Args:
            experiment: Run configuration
            dataset: Dataset; only its training split is used
            out_dir: Run directory

        Returns:
            Tuple of (training result, trained policy, trained value table)
        """
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, CONFIG_COPY), 'w', encoding='utf-8') as f:
            f.write(experiment.to_json())

        questions = dataset.question_set.train_questions()
        policy = TabularPolicy(experiment.task_mode, dataset.questions, experiment.policy, seed=experiment.seed)
        reference = ReferencePolicy.freeze(policy)
        value_table = ValueTable(policy)
        strategy = create_strategy(experiment.strategy, experiment.appa)
        clients = build_clients(dataset, experiment.metric, experiment.omega)

        logger.info(f"Training {strategy.label} seed={experiment.seed} for {experiment.iterations} iterations "
                    f"on {len(questions)} questions, {len(clients)} groups, {experiment.transport} transport")

        result = TrainingResult(strategy=strategy.label, seed=experiment.seed, iterations=0, output_dir=out_dir)
        transport = self.federation_service.open_transport(experiment.transport, clients, experiment.report_deadline)
        try:
            with open(os.path.join(out_dir, TRAINING_LOG), 'w', encoding='utf-8') as log_file, \
                    open(os.path.join(out_dir, DIAGNOSTICS_LOG), 'w', encoding='utf-8') as diagnostics_file:
                records = run_training(policy, reference, value_table, transport, strategy, questions,
                                       experiment.ppo, experiment.iterations, experiment.seed,
                                       log_file, diagnostics_file, experiment.log_every)
        except Exception as e:
            logger.error(f"Training {strategy.label} seed={experiment.seed} aborted: {e}", exc_info=True)
            raise
        finally:
            transport.close()

        save_checkpoint(os.path.join(out_dir, CHECKPOINT), policy, value_table,
                        meta={'strategy': strategy.label, 'seed': experiment.seed})

        result.iterations = len(records)
        result.fi_trace = [r['fi'] for r in records]
        result.branch_trace = [r['branch'] for r in records]
        result.final_state = strategy.state.to_dict() if strategy.state is not None else {}
        return result, policy, value_table
