"""
Unit tests for the reward metrics, checked against independent oracles
"""

import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.spatial.distance import jensenshannon
from scipy.stats import wasserstein_distance

from app.models.distribution import ProbDistribution, Ranking
from app.models.rollout import TaskMode
from app.utils.metrics import (
    MetricError,
    MetricKind,
    borda_reward,
    cosine_reward,
    js_reward,
    metric_reward,
    wasserstein_reward,
)

RANDOM_CASES = 10_000


def _random_pair(rng, k):
    p = rng.dirichlet(np.ones(k))
    q = rng.dirichlet(np.ones(k))
    # sparse supports exercise the zero-probability terms
    if rng.random() < 0.3:
        p[rng.integers(k)] = 0.0
        p /= p.sum()
    if rng.random() < 0.3:
        q[rng.integers(k)] = 0.0
        q /= q.sum()
    return p, q


def _grid(k, steps):
    """Every distribution over k options with entries in multiples of 1/steps"""
    for cut in itertools.combinations_with_replacement(range(steps + 1), k - 1):
        bounds = (0,) + cut + (steps,)
        yield np.array([bounds[i + 1] - bounds[i] for i in range(k)], dtype=float) / steps


def _transport_cost(p, q):
    """Exhaustive optimal transport on the option line, solved as a linear program"""
    k = p.size
    cost = np.array([[abs(i - j) for j in range(k)] for i in range(k)], dtype=float).ravel()
    a_eq = []
    for i in range(k):
        row = np.zeros((k, k))
        row[i, :] = 1.0
        a_eq.append(row.ravel())
    for j in range(k):
        col = np.zeros((k, k))
        col[:, j] = 1.0
        a_eq.append(col.ravel())
    b_eq = np.concatenate([p, q])
    result = linprog(cost, A_eq=np.array(a_eq), b_eq=b_eq, bounds=(0, None), method='highs')
    assert result.success
    return result.fun


def _js_oracle(p, q):
    total = 0.0
    for a, b in zip(p, q):
        m = 0.5 * (a + b)
        if a > 0:
            total += 0.5 * a * math.log2(a / m)
        if b > 0:
            total += 0.5 * b * math.log2(b / m)
    return 1.0 - total


def _cosine_oracle(p, q):
    dot = sum(a * b for a, b in zip(p, q))
    norm = math.sqrt(sum(a * a for a in p)) * math.sqrt(sum(b * b for b in q))
    return (1.0 + dot / norm) / 2.0


def _borda_oracle(a, b):
    k = len(a)
    score = sum(k - pos for pos in range(k) if a[pos] == b[pos])
    return score / (k * (k + 1) / 2)


class TestJsReward:
    """Test the Jensen-Shannon reward"""

    def test_identical(self):
        d = ProbDistribution((0.2, 0.3, 0.5))
        assert js_reward(d, d) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_point_masses(self):
        assert js_reward([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0, abs=1e-12)

    def test_half_vs_point_mass(self):
        assert js_reward([0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.68872, abs=1e-5)

    def test_length_mismatch(self):
        with pytest.raises(MetricError, match="Length mismatch"):
            js_reward([0.5, 0.5], [0.2, 0.3, 0.5])

    def test_matches_direct_oracles(self):
        rng = np.random.default_rng(11)
        for _ in range(RANDOM_CASES):
            p, q = _random_pair(rng, int(rng.integers(2, 8)))
            value = js_reward(p, q)
            assert value == pytest.approx(_js_oracle(p, q), abs=1e-9)
            assert value == pytest.approx(1.0 - jensenshannon(p, q, base=2) ** 2, abs=1e-9)
            assert 0.0 <= value <= 1.0


class TestWassersteinReward:
    """Test the 1-Wasserstein reward"""

    def test_identical(self):
        assert wasserstein_reward([0.3, 0.7], [0.3, 0.7]) == pytest.approx(1.0)

    def test_maximal_transport(self):
        assert wasserstein_reward([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]) == pytest.approx(0.0, abs=1e-12)

    def test_two_point(self):
        assert wasserstein_reward([0.6, 0.4], [0.4, 0.6]) == pytest.approx(0.8, abs=1e-12)

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_matches_transport_program_on_grid(self, k):
        grid = list(_grid(k, 4))
        for p in grid:
            for q in grid:
                expected = 1.0 - _transport_cost(p, q) / (k - 1)
                assert wasserstein_reward(p, q) == pytest.approx(expected, abs=1e-9)

    def test_matches_scipy_on_random_instances(self):
        rng = np.random.default_rng(12)
        for _ in range(RANDOM_CASES):
            k = int(rng.integers(2, 8))
            p, q = _random_pair(rng, k)
            support = np.arange(k)
            expected = 1.0 - wasserstein_distance(support, support, p, q) / (k - 1)
            assert wasserstein_reward(p, q) == pytest.approx(expected, abs=1e-9)


class TestCosineReward:
    """Test the cosine reward"""

    def test_identical(self):
        assert cosine_reward([0.1, 0.9], [0.1, 0.9]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_reward([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.5)

    def test_half_vs_point_mass(self):
        assert cosine_reward([0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.85355, abs=1e-5)

    def test_zero_vector(self):
        with pytest.raises(MetricError, match="zero vectors"):
            cosine_reward([0.0, 0.0], [1.0, 0.0])

    def test_matches_direct_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(RANDOM_CASES):
            p, q = _random_pair(rng, int(rng.integers(2, 8)))
            assert cosine_reward(p, q) == pytest.approx(_cosine_oracle(p, q), abs=1e-9)


class TestBordaReward:
    """Test the position-weighted ranking reward"""

    def test_identical(self):
        assert borda_reward(Ranking((2, 0, 1)), Ranking((2, 0, 1))) == pytest.approx(1.0)

    def test_first_position_only(self):
        assert borda_reward([0, 2, 1], [0, 1, 2]) == pytest.approx(0.5)

    def test_no_match(self):
        assert borda_reward([1, 2, 0], [0, 1, 2]) == pytest.approx(0.0)

    def test_rejects_non_permutation(self):
        with pytest.raises(MetricError, match="Not a permutation"):
            borda_reward([0, 0, 1], [0, 1, 2])

    def test_matches_direct_oracle(self):
        rng = np.random.default_rng(14)
        for _ in range(RANDOM_CASES):
            k = int(rng.integers(2, 8))
            a, b = rng.permutation(k).tolist(), rng.permutation(k).tolist()
            assert borda_reward(a, b) == pytest.approx(_borda_oracle(a, b), abs=1e-9)


class TestMetricDispatch:
    """Test metric selection by kind"""

    def test_task_modes(self):
        assert MetricKind.BORDA.task_mode is TaskMode.OPA
        assert MetricKind.for_task(TaskMode.DPA) == [MetricKind.JS, MetricKind.WASSERSTEIN, MetricKind.COSINE]

    def test_borda_uses_target_ranking(self):
        target = ProbDistribution((0.1, 0.7, 0.2))
        assert metric_reward(MetricKind.BORDA, Ranking((1, 2, 0)), target) == pytest.approx(1.0)

    def test_borda_needs_ranking(self):
        with pytest.raises(MetricError, match="ranking"):
            metric_reward(MetricKind.BORDA, ProbDistribution((0.5, 0.5)), ProbDistribution((0.5, 0.5)))

    def test_distribution_metric_needs_distribution(self):
        with pytest.raises(MetricError, match="distribution"):
            metric_reward(MetricKind.JS, Ranking((0, 1)), ProbDistribution((0.5, 0.5)))


class TestMetricInvariances:
    """Test symmetry and relabeling invariance on random instances"""

    PROPERTY_CASES = 1_000

    @pytest.mark.parametrize("reward", [js_reward, cosine_reward, wasserstein_reward])
    def test_distribution_metrics_are_symmetric(self, reward):
        rng = np.random.default_rng(21)
        for _ in range(self.PROPERTY_CASES):
            p, q = _random_pair(rng, int(rng.integers(2, 8)))
            assert reward(p, q) == pytest.approx(reward(q, p), abs=1e-12)

    @pytest.mark.parametrize("reward", [js_reward, cosine_reward])
    def test_unordered_metrics_ignore_option_labels(self, reward):
        rng = np.random.default_rng(22)
        for _ in range(self.PROPERTY_CASES):
            k = int(rng.integers(2, 8))
            p, q = _random_pair(rng, k)
            relabel = rng.permutation(k)
            assert reward(p[relabel], q[relabel]) == pytest.approx(reward(p, q), abs=1e-12)

    def test_wasserstein_ignores_direction_of_the_option_line(self):
        rng = np.random.default_rng(23)
        for _ in range(self.PROPERTY_CASES):
            p, q = _random_pair(rng, int(rng.integers(2, 8)))
            assert wasserstein_reward(p[::-1], q[::-1]) == pytest.approx(wasserstein_reward(p, q), abs=1e-12)

    def test_borda_is_symmetric_and_ignores_option_labels(self):
        rng = np.random.default_rng(24)
        for _ in range(self.PROPERTY_CASES):
            k = int(rng.integers(2, 8))
            a, b = rng.permutation(k), rng.permutation(k)
            relabel = rng.permutation(k)
            expected = borda_reward(a.tolist(), b.tolist())
            assert borda_reward(b.tolist(), a.tolist()) == pytest.approx(expected, abs=1e-12)
            assert borda_reward(relabel[a].tolist(), relabel[b].tolist()) == pytest.approx(expected, abs=1e-12)
