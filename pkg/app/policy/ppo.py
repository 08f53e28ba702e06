"""
PPO - Reward shaping, advantage estimation and the clipped-surrogate update for tabular policies

Gradients are analytic: for a softmax row with temperature T the gradient of
log pi(a) with respect to the logits is (onehot(a) - pi) / T.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..models.experiment import PPOConfig
from .tabular_policy import TabularPolicy, Trajectory, ValueTable

logger = logging.getLogger(__name__)

WHITEN_EPS = 1e-8


class TrainingError(RuntimeError):
    """Raised when an update produces a non-finite loss"""

    def __init__(self, message: str, diagnostic: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


@dataclass
class LossReport:
    """Loss components averaged over the minibatches of one update"""

    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    total: float = 0.0
    clip_fraction: float = 0.0
    approx_kl: float = 0.0
    n_minibatches: int = 0

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class StepBatch:
    """Flattened per-step samples of a rollout batch"""

    keys: List[str] = field(default_factory=list)
    steps: List[int] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    priors: List[Tuple[int, ...]] = field(default_factory=list)
    logp_old: np.ndarray = field(default_factory=lambda: np.zeros(0))
    advantages: np.ndarray = field(default_factory=lambda: np.zeros(0))
    returns: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values_old: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.keys)


def whiten_and_clamp(rewards: Sequence[float], clamp: float = 5.0) -> np.ndarray:
    """
    Standardize a reward batch and clamp it

    Args:
        rewards: Non-empty batch of rewards
        clamp: Symmetric bound applied after standardizing

    Returns:
        np.ndarray: (r - mean) / std clipped to [-clamp, clamp]; zeros when std < 1e-8
    """
    values = np.asarray(rewards, dtype=float)
    if values.size == 0:
        raise ValueError("Cannot whiten an empty reward batch")
    std = values.std()
    if std < WHITEN_EPS:
        return np.zeros_like(values)
    return np.clip((values - values.mean()) / std, -clamp, clamp)


def shape_rewards(traj: Trajectory, beta: float, terminal: Optional[float] = None,
                  kl_estimator: str = 'log_ratio') -> np.ndarray:
    """
    Per-step rewards: a KL penalty at every step plus the terminal reward at the last

    Args:
        traj: Complete trajectory
        beta: KL coefficient
        terminal: Terminal reward; the trajectory's own when omitted
        kl_estimator: "log_ratio" for log pi - log pi_ref of the taken action, "full" for
            the exact KL of each step distribution

    Returns:
        np.ndarray: One reward per step
    """
    if kl_estimator == 'full':
        kl = np.asarray(traj.kl_full, dtype=float)
    else:
        kl = traj.log_ratio
    rewards = -beta * kl
    rewards[-1] += traj.terminal_reward if terminal is None else terminal
    return rewards


def gae(rewards: Sequence[float], values: Sequence[float], gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation with a zero terminal bootstrap

    Args:
        rewards: Per-step rewards
        values: Per-step value estimates
        gamma: Discount
        lam: GAE lambda

    Returns:
        Tuple of (advantages, returns)
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.shape != v.shape:
        raise ValueError(f"{r.size} rewards for {v.size} values")
    advantages = np.zeros_like(r)
    next_value = 0.0
    running = 0.0
    for t in range(r.size - 1, -1, -1):
        delta = r[t] + gamma * next_value - v[t]
        running = delta + gamma * lam * running
        advantages[t] = running
        next_value = v[t]
    return advantages, advantages + v


def build_batch(trajectories: Sequence[Trajectory], cfg: PPOConfig) -> StepBatch:
    """
    Whiten, shape and run GAE over a rollout batch

    With `whiten_before_shaping` the terminal rewards are whitened across trajectories
    and the KL terms added afterwards; otherwise all shaped per-step rewards are
    whitened together.

    Args:
        trajectories: Trajectories carrying their aggregated terminal rewards
        cfg: PPO settings

    Returns:
        StepBatch: One sample per step
    """
    if not trajectories:
        raise ValueError("Cannot build a batch from no trajectories")

    if cfg.whiten_before_shaping:
        terminals = whiten_and_clamp([t.terminal_reward for t in trajectories], cfg.reward_clamp)
        shaped = [shape_rewards(t, cfg.kl_coef, float(w), cfg.kl_estimator) for t, w in zip(trajectories, terminals)]
    else:
        raw = [shape_rewards(t, cfg.kl_coef, None, cfg.kl_estimator) for t in trajectories]
        flat = whiten_and_clamp(np.concatenate(raw), cfg.reward_clamp)
        bounds = np.cumsum([0] + [len(r) for r in raw])
        shaped = [flat[bounds[i]:bounds[i + 1]] for i in range(len(raw))]

    batch = StepBatch()
    logp_old, advantages, returns, values_old = [], [], [], []
    for traj, rewards in zip(trajectories, shaped):
        adv, ret = gae(rewards, traj.values, cfg.gamma, cfg.gae_lambda)
        for t, a in enumerate(traj.actions):
            batch.keys.append(traj.key)
            batch.steps.append(t)
            batch.actions.append(a)
            batch.priors.append(tuple(traj.actions[:t]))
        logp_old.append(traj.logp_behavior)
        advantages.append(adv)
        returns.append(ret)
        values_old.append(traj.values)

    batch.logp_old = np.concatenate(logp_old)
    batch.advantages = np.concatenate(advantages)
    batch.returns = np.concatenate(returns)
    batch.values_old = np.concatenate(values_old)
    return batch


def ppo_loss(policy: TabularPolicy, value_table: ValueTable, batch: StepBatch,
             indices: Sequence[int], cfg: PPOConfig) -> Tuple[LossReport, Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """
    Composite PPO loss and its gradients over some samples of a batch

    total = policy_loss + c1 * value_loss - c2 * entropy, each a mean over the samples.

    Args:
        policy: Current policy
        value_table: Current values
        batch: Step samples
        indices: Samples in this minibatch
        cfg: PPO settings

    Returns:
        Tuple of (loss report, policy gradients by table key, value gradients by table key)
    """
    n = len(indices)
    if n == 0:
        raise ValueError("Empty minibatch")

    policy_grads: Dict[str, np.ndarray] = {}
    value_grads: Dict[str, np.ndarray] = {}
    eps = cfg.clip_range
    temp = policy.temperature
    policy_loss = value_loss = entropy = 0.0
    clipped = 0
    approx_kl = 0.0

    for i in indices:
        key, step, action = batch.keys[i], batch.steps[i], batch.actions[i]
        table = policy.tables[key]
        mask = policy.allowed_mask(table.shape[0], batch.priors[i])
        logp = policy.step_log_probs(key, step, mask)
        probs = np.exp(logp)

        # clipped surrogate
        log_ratio = logp[action] - batch.logp_old[i]
        ratio = float(np.exp(log_ratio))
        adv = batch.advantages[i]
        unclipped = ratio * adv
        clipped_obj = float(np.clip(ratio, 1.0 - eps, 1.0 + eps)) * adv
        policy_loss -= min(unclipped, clipped_obj)
        if unclipped <= clipped_obj:
            d_logp = -unclipped
        else:
            d_logp = 0.0
            clipped += 1
        approx_kl += -log_ratio

        onehot = np.zeros_like(probs)
        onehot[action] = 1.0
        row_grad = d_logp * (onehot - probs) / temp

        # entropy bonus
        safe_logp = np.where(probs > 0.0, logp, 0.0)
        h = -float(np.sum(probs * safe_logp))
        entropy += h
        if cfg.entropy_coef > 0.0:
            d_h = -probs * (safe_logp + h) / temp
            row_grad = row_grad - cfg.entropy_coef * d_h

        grad = policy_grads.setdefault(key, np.zeros_like(table))
        grad[step] += row_grad

        # clipped value loss
        v = value_table.values[key][step]
        v_old = batch.values_old[i]
        target = batch.returns[i]
        delta_v = v - v_old
        v_clipped = v_old + float(np.clip(delta_v, -cfg.clip_range_value, cfg.clip_range_value))
        err, err_clipped = v - target, v_clipped - target
        if err ** 2 >= err_clipped ** 2:
            value_loss += 0.5 * err ** 2
            d_v = err
        else:
            value_loss += 0.5 * err_clipped ** 2
            d_v = err_clipped if abs(delta_v) < cfg.clip_range_value else 0.0
        vgrad = value_grads.setdefault(key, np.zeros_like(value_table.values[key]))
        vgrad[step] += cfg.vf_coef * d_v

    for grad in policy_grads.values():
        grad /= n
    for grad in value_grads.values():
        grad /= n

    report = LossReport(
        policy_loss=policy_loss / n,
        value_loss=value_loss / n,
        entropy=entropy / n,
        clip_fraction=clipped / n,
        approx_kl=approx_kl / n,
        n_minibatches=1,
    )
    report.total = report.policy_loss + cfg.vf_coef * report.value_loss - cfg.entropy_coef * report.entropy
    return report, policy_grads, value_grads


def ppo_update(policy: TabularPolicy, value_table: ValueTable, trajectories: Sequence[Trajectory],
               cfg: PPOConfig, rng: Optional[np.random.Generator] = None,
               iteration: int = 0) -> Tuple[TabularPolicy, ValueTable, LossReport]:
    """
    Run ppo_epochs x minibatches gradient-descent steps on the tables in place

    Args:
        policy: Policy to update
        value_table: Values to update
        trajectories: Rollout batch with terminal rewards set
        cfg: PPO settings
        rng: Minibatch shuffling generator
        iteration: Iteration index, for diagnostics

    Returns:
        Tuple of (policy, value table, averaged loss report)

    Raises:
        TrainingError: If a loss becomes non-finite
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    batch = build_batch(trajectories, cfg)
    summary = LossReport()

    for epoch in range(cfg.ppo_epochs):
        order = rng.permutation(len(batch))
        for mb, indices in enumerate(np.array_split(order, min(cfg.minibatches, len(batch)))):
            if len(indices) == 0:
                continue
            report, policy_grads, value_grads = ppo_loss(policy, value_table, batch, indices, cfg)
            if not np.isfinite(report.total):
                diagnostic = {'iteration': iteration, 'epoch': epoch, 'minibatch': mb, **report.to_dict()}
                logger.error(f"Non-finite PPO loss: {diagnostic}")
                raise TrainingError(f"Non-finite loss at iteration {iteration}", diagnostic)

            for key, grad in policy_grads.items():
                policy.tables[key] -= cfg.learning_rate * grad
            for key, grad in value_grads.items():
                value_table.values[key] -= cfg.learning_rate * grad

            summary.policy_loss += report.policy_loss
            summary.value_loss += report.value_loss
            summary.entropy += report.entropy
            summary.total += report.total
            summary.clip_fraction += report.clip_fraction
            summary.approx_kl += report.approx_kl
            summary.n_minibatches += 1

    if summary.n_minibatches:
        for name in ('policy_loss', 'value_loss', 'entropy', 'total', 'clip_fraction', 'approx_kl'):
            setattr(summary, name, getattr(summary, name) / summary.n_minibatches)
    return policy, value_table, summary
