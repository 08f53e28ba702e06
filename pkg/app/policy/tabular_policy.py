"""
Tabular Policy - A softmax-table policy that answers survey questions step by step

A DPA episode picks one probability-weight bin per option; the weights are then
renormalized into a distribution. An OPA episode picks one not-yet-chosen option per
step, producing a ranking. Tables are keyed by question id or by option count.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax, rel_entr

from ..models.dataset import Question
from ..models.distribution import ProbDistribution, Ranking
from ..models.experiment import PolicyConfig
from ..models.rollout import RolloutBroadcast, TaskMode
from ..utils.response_format import serialize_dpa, serialize_opa

logger = logging.getLogger(__name__)

KEY_QUESTION = "question"
KEY_OPTION_COUNT = "option_count"


class TabularPolicy:
    """
    Per-step softmax tables

    DPA tables have shape (K, bins); OPA tables have shape (K, K), and at each step the
    options already chosen are masked out.
    """

    def __init__(self, task_mode: TaskMode, questions: Iterable[Question],
                 policy_config: Optional[PolicyConfig] = None, seed: int = 0):
        self.task_mode = task_mode
        self.policy_config = policy_config or PolicyConfig()
        self.bins = self.policy_config.bins
        self.temperature = self.policy_config.temperature
        self.table_key = self.policy_config.table_key
        self.grid = np.linspace(0.0, 1.0, self.bins)
        self.questions: Dict[str, Question] = {q.id: q for q in questions}
        self.tables: Dict[str, np.ndarray] = {}

        rng = np.random.default_rng(seed)
        for qid in sorted(self.questions):
            q = self.questions[qid]
            key = self.key_for(q)
            if key in self.tables:
                continue
            shape = (q.k, self.bins) if task_mode is TaskMode.DPA else (q.k, q.k)
            if self.policy_config.init_scale > 0.0:
                self.tables[key] = rng.normal(0.0, self.policy_config.init_scale, size=shape)
            else:
                self.tables[key] = np.zeros(shape)
        logger.debug(f"Policy created with {len(self.tables)} tables for {len(self.questions)} questions")

    def key_for(self, question: Question) -> str:
        """Table key of a question"""
        if self.table_key == KEY_OPTION_COUNT:
            return f"k:{question.k}"
        return f"q:{question.id}"

    def question(self, question_id: str) -> Question:
        try:
            return self.questions[question_id]
        except KeyError:
            raise KeyError(f"Policy does not cover question {question_id}") from None

    def allowed_mask(self, k: int, prior_actions: Sequence[int]) -> Optional[np.ndarray]:
        """Options still available at the next step; None for DPA"""
        if self.task_mode is TaskMode.DPA:
            return None
        mask = np.ones(k, dtype=bool)
        mask[list(prior_actions)] = False
        return mask

    def step_log_probs(self, key: str, step: int, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Log-probabilities of every action at one step

        Masked actions get -inf.
        """
        z = self.tables[key][step] / self.temperature
        if mask is not None:
            z = np.where(mask, z, -np.inf)
        return log_softmax(z)

    def step_probs(self, key: str, step: int, mask: Optional[np.ndarray] = None) -> np.ndarray:
        return np.exp(self.step_log_probs(key, step, mask))

    def log_prob(self, question: Question, step: int, action: int, prior_actions: Sequence[int] = ()) -> float:
        """Log-probability of one action given the actions taken before it"""
        mask = self.allowed_mask(question.k, prior_actions)
        return float(self.step_log_probs(self.key_for(question), step, mask)[action])

    def episode_log_probs(self, question: Question, actions: Sequence[int]) -> np.ndarray:
        """Log-probability of every action of an episode"""
        return np.array([self.log_prob(question, t, a, actions[:t]) for t, a in enumerate(actions)])

    def step_kl(self, other: 'TabularPolicy', question: Question, actions: Sequence[int]) -> np.ndarray:
        """KL(self || other) of the step distributions visited by an episode"""
        key = self.key_for(question)
        kls = []
        for t in range(len(actions)):
            mask = self.allowed_mask(question.k, actions[:t])
            p = self.step_probs(key, t, mask)
            q = other.step_probs(key, t, mask)
            kls.append(float(np.sum(rel_entr(p, q))))
        return np.array(kls)

    def sample_actions(self, question: Question, rng: np.random.Generator) -> Tuple[List[int], np.ndarray]:
        """
        Sample a full episode

        Returns:
            Tuple of (actions, log-probabilities under this policy)
        """
        key = self.key_for(question)
        actions: List[int] = []
        log_probs = []
        for t in range(question.k):
            mask = self.allowed_mask(question.k, actions)
            logp = self.step_log_probs(key, t, mask)
            cdf = np.cumsum(np.exp(logp))
            a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side='right'))
            a = min(a, cdf.size - 1)
            actions.append(a)
            log_probs.append(float(logp[a]))
        return actions, np.array(log_probs)

    def greedy_actions(self, question: Question) -> List[int]:
        """Highest-probability action at every step, lowest index on ties"""
        key = self.key_for(question)
        actions: List[int] = []
        for t in range(question.k):
            mask = self.allowed_mask(question.k, actions)
            actions.append(int(np.argmax(self.step_log_probs(key, t, mask))))
        return actions

    def actions_to_output(self, question: Question, actions: Sequence[int]) -> Union[ProbDistribution, Ranking]:
        """
        Turn an episode into the answer it encodes

        DPA bins become weights renormalized to a distribution, uniform when every
        weight is zero. OPA actions are the ranking itself.
        """
        if self.task_mode is TaskMode.OPA:
            return Ranking(tuple(actions))
        weights = self.grid[np.asarray(actions, dtype=int)]
        if weights.sum() <= 0.0:
            return ProbDistribution.uniform(question.k)
        return ProbDistribution.renormalize(weights)

    def render(self, question: Question, actions: Sequence[int]) -> str:
        """Answer line for an episode"""
        output = self.actions_to_output(question, actions)
        if self.task_mode is TaskMode.OPA:
            return serialize_opa(output, question.option_labels)
        return serialize_dpa(output)

    def to_flat(self, prefix: str = "policy") -> Dict[str, list]:
        return {f"{prefix}/{key}": table.tolist() for key, table in sorted(self.tables.items())}

    def load_flat(self, flat: Dict[str, list], prefix: str = "policy") -> None:
        """
        Replace table contents from a flat map

        Raises:
            ValueError: If a table is missing or has the wrong shape
        """
        for key, table in self.tables.items():
            name = f"{prefix}/{key}"
            if name not in flat:
                raise ValueError(f"Checkpoint has no table {name}")
            values = np.asarray(flat[name], dtype=float)
            if values.shape != table.shape:
                raise ValueError(f"Table {name} has shape {values.shape}, expected {table.shape}")
            self.tables[key] = values


class ReferencePolicy(TabularPolicy):
    """Frozen copy of a policy; its tables are read-only"""

    @classmethod
    def freeze(cls, policy: TabularPolicy) -> 'ReferencePolicy':
        frozen = object.__new__(cls)
        frozen.__dict__.update(policy.__dict__)
        frozen.tables = {}
        for key, table in policy.tables.items():
            values = table.copy()
            values.setflags(write=False)
            frozen.tables[key] = values
        return frozen

    def load_flat(self, flat: Dict[str, list], prefix: str = "policy") -> None:
        raise TypeError("Reference policy cannot be modified")


class ValueTable:
    """State-value estimates, one per (table key, step)"""

    def __init__(self, policy: TabularPolicy):
        self.values: Dict[str, np.ndarray] = {key: np.zeros(table.shape[0]) for key, table in policy.tables.items()}

    def episode_values(self, key: str, n_steps: int) -> np.ndarray:
        return self.values[key][:n_steps].copy()

    def to_flat(self, prefix: str = "value") -> Dict[str, list]:
        return {f"{prefix}/{key}": v.tolist() for key, v in sorted(self.values.items())}

    def load_flat(self, flat: Dict[str, list], prefix: str = "value") -> None:
        for key, v in self.values.items():
            name = f"{prefix}/{key}"
            if name not in flat:
                raise ValueError(f"Checkpoint has no table {name}")
            values = np.asarray(flat[name], dtype=float)
            if values.shape != v.shape:
                raise ValueError(f"Table {name} has shape {values.shape}, expected {v.shape}")
            self.values[key] = values


@dataclass
class Trajectory:
    """
    One episode: the sequential actions answering one question

    Attributes:
        question_id: Question answered
        key: Policy table key
        actions: Action per step
        logp_behavior: Log-probabilities under the sampling policy
        logp_ref: Log-probabilities under the reference policy
        values: Value estimates per step at sampling time
        kl_full: Exact KL of each visited step distribution against the reference
        response: Rendered answer line
        terminal_reward: Aggregated reward of the answer
    """

    question_id: str
    key: str
    actions: Tuple[int, ...]
    logp_behavior: np.ndarray
    logp_ref: np.ndarray
    values: np.ndarray
    kl_full: np.ndarray = field(default_factory=lambda: np.zeros(0))
    response: str = ""
    terminal_reward: float = 0.0

    def __post_init__(self):
        n = len(self.actions)
        for name in ('logp_behavior', 'logp_ref', 'values'):
            if len(getattr(self, name)) != n:
                raise ValueError(f"Trajectory {self.question_id}: {name} has {len(getattr(self, name))} entries for {n} steps")

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @property
    def log_ratio(self) -> np.ndarray:
        return self.logp_behavior - self.logp_ref


def rollout(policy: TabularPolicy,
            questions: Sequence[Question],
            rng_seed: int,
            iteration: int = 0,
            reference: Optional[TabularPolicy] = None,
            value_table: Optional[ValueTable] = None) -> Tuple[List[Trajectory], RolloutBroadcast]:
    """
    Sample one episode per question and build the broadcast

    Args:
        policy: Sampling policy
        questions: Questions to answer, in broadcast order
        rng_seed: Sampling seed
        iteration: Iteration index stamped on the broadcast
        reference: Reference policy for the KL terms; the policy itself when omitted
        value_table: Value estimates to record; zeros when omitted

    Returns:
        Tuple of (trajectories, broadcast)
    """
    rng = np.random.default_rng(rng_seed)
    reference = reference if reference is not None else policy
    trajectories = []
    items = []
    for q in questions:
        key = policy.key_for(q)
        actions, logp = policy.sample_actions(q, rng)
        logp_ref = reference.episode_log_probs(q, actions)
        values = value_table.episode_values(key, q.k) if value_table is not None else np.zeros(q.k)
        response = policy.render(q, actions)
        trajectories.append(Trajectory(
            question_id=q.id,
            key=key,
            actions=tuple(actions),
            logp_behavior=logp,
            logp_ref=logp_ref,
            values=values,
            kl_full=policy.step_kl(reference, q, actions),
            response=response,
        ))
        items.append((q.id, response))
    broadcast = RolloutBroadcast(iteration=iteration, task_mode=policy.task_mode, items=tuple(items))
    return trajectories, broadcast


def greedy_outputs(policy: TabularPolicy, questions: Sequence[Question]) -> Dict[str, str]:
    """Answer line of the greedy episode for every question"""
    return {q.id: policy.render(q, policy.greedy_actions(q)) for q in questions}


def sampled_outputs(policy: TabularPolicy, questions: Sequence[Question], rng_seed: int) -> Dict[str, str]:
    """Answer line of one sampled episode per question"""
    rng = np.random.default_rng(rng_seed)
    outputs = {}
    for q in questions:
        actions, _ = policy.sample_actions(q, rng)
        outputs[q.id] = policy.render(q, actions)
    return outputs


def save_checkpoint(path: str, policy: TabularPolicy, value_table: ValueTable, meta: Optional[dict] = None) -> None:
    """
    Write every table as one flat JSON map

    Args:
        path: Output file
        policy: Trained policy
        value_table: Trained values
        meta: Extra entries stored under "meta/..." keys
    """
    flat: Dict[str, object] = {
        'meta/task_mode': policy.task_mode.value,
        'meta/bins': policy.bins,
        'meta/temperature': policy.temperature,
        'meta/table_key': policy.table_key,
    }
    for name, value in (meta or {}).items():
        flat[f"meta/{name}"] = value
    flat.update(policy.to_flat())
    flat.update(value_table.to_flat())
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(flat, f, sort_keys=True)
    logger.info(f"Checkpoint written to {path}")


def load_checkpoint(path: str, questions: Iterable[Question]) -> Tuple[TabularPolicy, ValueTable, Dict[str, object]]:
    """
    Rebuild a policy and value table from a checkpoint file

    Args:
        path: Checkpoint written by `save_checkpoint`
        questions: Questions the policy must cover

    Returns:
        Tuple of (policy, value table, meta entries)
    """
    with open(path, 'r', encoding='utf-8') as f:
        flat = json.load(f)
    policy_config = PolicyConfig(bins=flat['meta/bins'], temperature=flat['meta/temperature'],
                                 table_key=flat['meta/table_key'])
    policy = TabularPolicy(TaskMode(flat['meta/task_mode']), questions, policy_config)
    policy.load_flat(flat)
    values = ValueTable(policy)
    values.load_flat(flat)
    meta = {key.split('/', 1)[1]: value for key, value in flat.items() if key.startswith('meta/')}
    return policy, values, meta
