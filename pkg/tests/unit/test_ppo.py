"""
Unit tests for reward shaping, GAE and the PPO update
"""

import math

import numpy as np
import pytest

from app.models.dataset import Question
from app.models.experiment import PolicyConfig, PPOConfig
from app.models.rollout import TaskMode
from app.policy.ppo import (
    StepBatch,
    TrainingError,
    build_batch,
    gae,
    ppo_loss,
    ppo_update,
    shape_rewards,
    whiten_and_clamp,
)
from app.policy.tabular_policy import ReferencePolicy, TabularPolicy, Trajectory, ValueTable, rollout

FD_STEP = 1e-6


def _trajectory(logp, logp_ref, terminal, values=None):
    n = len(logp)
    return Trajectory(
        question_id="q1",
        key="q:q1",
        actions=tuple(range(n)),
        logp_behavior=np.asarray(logp, dtype=float),
        logp_ref=np.asarray(logp_ref, dtype=float),
        values=np.zeros(n) if values is None else np.asarray(values, dtype=float),
        terminal_reward=terminal,
    )


def _training_instance(mode, question, bins=3, seed=0):
    """Policy slightly moved away from its sampling snapshot, with a non-trivial batch"""
    rng = np.random.default_rng(seed)
    policy = TabularPolicy(mode, [question], PolicyConfig(bins=bins, init_scale=0.5), seed=seed)
    reference = ReferencePolicy.freeze(policy)
    values = ValueTable(policy)
    for v in values.values.values():
        v[:] = rng.uniform(-0.5, 0.5, size=v.shape)

    trajectories, _ = rollout(policy, [question] * 3, rng_seed=seed, reference=reference, value_table=values)
    for traj, reward in zip(trajectories, (0.2, 0.9, 0.5)):
        traj.terminal_reward = reward

    for table in policy.tables.values():
        table += rng.uniform(-0.02, 0.02, size=table.shape)
    for v in values.values.values():
        v += rng.uniform(-0.05, 0.05, size=v.shape)
    return policy, values, trajectories


def _finite_difference(params, loss_fn):
    grad = np.zeros_like(params)
    for idx in np.ndindex(params.shape):
        original = params[idx]
        params[idx] = original + FD_STEP
        up = loss_fn()
        params[idx] = original - FD_STEP
        down = loss_fn()
        params[idx] = original
        grad[idx] = (up - down) / (2 * FD_STEP)
    return grad


class TestRewardShaping:
    """Test KL shaping and batch whitening"""

    def test_policy_equals_reference(self):
        assert shape_rewards(_trajectory([-0.3, -0.7], [-0.3, -0.7], 0.8), 0.05).tolist() == [0.0, 0.8]

    def test_log_ratio_penalty(self):
        rewards = shape_rewards(_trajectory([0.2, 0.2], [0.0, 0.0], 1.0), 0.05)
        assert rewards == pytest.approx([-0.01, 0.99])

    def test_beta_zero(self):
        rewards = shape_rewards(_trajectory([-2.0, -0.1], [-0.1, -3.0], 0.4), 0.0)
        assert rewards == pytest.approx([0.0, 0.4])

    def test_explicit_terminal_overrides(self):
        rewards = shape_rewards(_trajectory([0.0], [0.0], 0.4), 0.05, terminal=-1.0)
        assert rewards.tolist() == [-1.0]

    def test_full_kl_estimator(self):
        traj = _trajectory([0.0, 0.0], [0.0, 0.0], 1.0)
        traj.kl_full = np.array([0.4, 0.2])
        assert shape_rewards(traj, 0.5, kl_estimator='full') == pytest.approx([-0.2, 0.9])

    def test_whiten_constant_batch(self):
        assert whiten_and_clamp([0.7, 0.7, 0.7]).tolist() == [0.0, 0.0, 0.0]

    def test_whiten_two_values(self):
        assert whiten_and_clamp([0.0, 2.0]) == pytest.approx([-1.0, 1.0])

    def test_whiten_clamps(self):
        batch = [0.0] * 36 + [100.0]
        whitened = whiten_and_clamp(batch)
        assert whitened[-1] == 5.0
        assert (100.0 - np.mean(batch)) / np.std(batch) > 5.0

    def test_whiten_empty(self):
        with pytest.raises(ValueError, match="empty"):
            whiten_and_clamp([])

    def test_batch_whitens_shaped_steps_together(self):
        trajectories = [_trajectory([0.2, 0.2], [0.0, 0.0], 1.0), _trajectory([-0.1, 0.0], [0.0, 0.0], 0.0)]
        cfg = PPOConfig(whiten_before_shaping=False, kl_coef=0.5, gamma=1.0, gae_lambda=1.0)
        batch = build_batch(trajectories, cfg)

        whitened = whiten_and_clamp(np.concatenate([shape_rewards(t, 0.5) for t in trajectories]))
        expected = np.concatenate([np.cumsum(whitened[i:i + 2][::-1])[::-1] for i in (0, 2)])
        assert batch.advantages == pytest.approx(expected)
        assert batch.returns == pytest.approx(expected)

        terminal_first = build_batch(trajectories, cfg.model_copy(update={"whiten_before_shaping": True}))
        assert not np.allclose(terminal_first.returns, batch.returns)


class TestGae:
    """Test generalized advantage estimation"""

    def test_single_step(self):
        adv, ret = gae([1.0], [0.5], 1.0, 0.95)
        assert adv.tolist() == [0.5]
        assert ret.tolist() == [1.0]

    def test_two_steps(self):
        adv, ret = gae([0.0, 1.0], [0.5, 0.5], 1.0, 0.95)
        assert adv == pytest.approx([0.475, 0.5])
        assert ret == pytest.approx([0.975, 1.0])

    def test_lambda_zero_is_td_error(self):
        r, v = [0.1, -0.2, 0.7], [0.3, 0.4, 0.2]
        adv, _ = gae(r, v, 0.9, 0.0)
        deltas = [r[0] + 0.9 * v[1] - v[0], r[1] + 0.9 * v[2] - v[1], r[2] - v[2]]
        assert adv.tolist() == deltas

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="rewards"):
            gae([1.0, 0.0], [0.5], 1.0, 0.95)


class TestPpoLoss:
    """Test the clipped surrogate, its gradients and the update"""

    def test_ratio_one_gives_negative_mean_advantage(self):
        q = Question("q1", ("A", "B", "C"))
        policy = TabularPolicy(TaskMode.DPA, [q], PolicyConfig(init_scale=0.5), seed=2)
        values = ValueTable(policy)
        trajectories, _ = rollout(policy, [q, q, q, q], rng_seed=1, value_table=values)
        for traj, reward in zip(trajectories, (0.1, 0.4, 0.8, 0.3)):
            traj.terminal_reward = reward
        cfg = PPOConfig()
        batch = build_batch(trajectories, cfg)
        report, _, _ = ppo_loss(policy, values, batch, range(len(batch)), cfg)
        assert report.policy_loss == pytest.approx(-np.mean(batch.advantages), abs=1e-12)
        assert report.clip_fraction == 0.0

    def test_clipped_branch(self):
        q = Question("q1", ("A", "B"))
        policy = TabularPolicy(TaskMode.DPA, [q], PolicyConfig(bins=3))
        values = ValueTable(policy)
        logp = policy.log_prob(q, 0, 0)
        batch = StepBatch(keys=["q:q1"], steps=[0], actions=[0], priors=[()],
                          logp_old=np.array([logp - math.log(1.5)]), advantages=np.array([1.0]),
                          returns=np.array([0.0]), values_old=np.array([0.0]))
        report, grads, _ = ppo_loss(policy, values, batch, [0], PPOConfig())
        assert report.policy_loss == pytest.approx(-1.2)
        assert report.clip_fraction == 1.0
        assert not np.any(grads["q:q1"])

    @pytest.mark.parametrize("mode, question", [
        (TaskMode.DPA, Question("q1", ("A", "B"))),
        (TaskMode.OPA, Question("q1", ("A", "B", "C"))),
    ])
    def test_gradients_match_finite_differences(self, mode, question):
        cfg = PPOConfig(entropy_coef=0.1, clip_range_value=0.5)
        policy, values, trajectories = _training_instance(mode, question)
        batch = build_batch(trajectories, cfg)
        indices = list(range(len(batch)))
        _, policy_grads, value_grads = ppo_loss(policy, values, batch, indices, cfg)

        def total():
            return ppo_loss(policy, values, batch, indices, cfg)[0].total

        for key, table in policy.tables.items():
            expected = _finite_difference(table, total)
            assert policy_grads[key] == pytest.approx(expected, rel=1e-5, abs=1e-8)
        for key, v in values.values.items():
            expected = _finite_difference(v, total)
            assert value_grads[key] == pytest.approx(expected, rel=1e-5, abs=1e-8)

    def test_zero_signal_leaves_tables_unchanged(self):
        q = Question("q1", ("A", "B", "C"))
        policy = TabularPolicy(TaskMode.DPA, [q], PolicyConfig(init_scale=0.3), seed=1)
        values = ValueTable(policy)
        before = policy.tables["q:q1"].copy()
        trajectories, _ = rollout(policy, [q, q], rng_seed=0, value_table=values)
        for traj in trajectories:
            traj.terminal_reward = 1.0
        ppo_update(policy, values, trajectories, PPOConfig(kl_coef=0.0, learning_rate=0.5))
        assert np.array_equal(policy.tables["q:q1"], before)
        assert not np.any(values.values["q:q1"])

    @pytest.mark.parametrize("whiten_before_shaping", [True, False])
    def test_update_moves_toward_rewarded_action(self, whiten_before_shaping):
        q = Question("q1", ("A", "B"))
        policy = TabularPolicy(TaskMode.OPA, [q])
        values = ValueTable(policy)
        cfg = PPOConfig(learning_rate=0.5, minibatches=1, whiten_before_shaping=whiten_before_shaping)
        for seed in range(30):
            trajectories, _ = rollout(policy, [q] * 8, rng_seed=seed, value_table=values)
            for traj in trajectories:
                traj.terminal_reward = 1.0 if traj.actions[0] == 1 else 0.0
            ppo_update(policy, values, trajectories, cfg, np.random.default_rng(seed), iteration=seed)
        assert policy.greedy_actions(q) == [1, 0]

    def test_non_finite_loss_aborts(self):
        q = Question("q1", ("A", "B"))
        policy = TabularPolicy(TaskMode.DPA, [q])
        values = ValueTable(policy)
        trajectories, _ = rollout(policy, [q, q], rng_seed=0)
        trajectories[0].terminal_reward = float('nan')
        with pytest.raises(TrainingError, match="Non-finite") as exc_info:
            ppo_update(policy, values, trajectories, PPOConfig(), iteration=12)
        assert exc_info.value.diagnostic['iteration'] == 12


class TestKlPenalty:
    """Test that a larger KL coefficient keeps the policy closer to its reference"""

    @staticmethod
    def _final_kl(beta, seed, iterations=40):
        q = Question("q1", ("A", "B"))
        policy = TabularPolicy(TaskMode.DPA, [q], PolicyConfig(bins=3))
        reference = ReferencePolicy.freeze(policy)
        values = ValueTable(policy)
        cfg = PPOConfig(kl_coef=beta, learning_rate=0.3, minibatches=2)
        for it in range(iterations):
            trajectories, _ = rollout(policy, [q] * 16, rng_seed=1000 * seed + it,
                                      reference=reference, value_table=values)
            for traj in trajectories:
                traj.terminal_reward = traj.actions[0] / 2.0
            ppo_update(policy, values, trajectories, cfg, np.random.default_rng(it), iteration=it)
        return float(policy.step_kl(reference, q, [0, 0]).sum())

    def test_mean_kl_non_increasing_in_beta(self):
        kls = [np.mean([self._final_kl(beta, seed) for seed in range(4)]) for beta in (0.0, 0.05, 0.5)]
        assert kls[0] > 0.0
        assert kls[0] >= kls[1] >= kls[2]
