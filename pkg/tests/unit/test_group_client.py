"""
Unit tests for the group-side evaluator
"""

import pytest

from app.api.group_client import GroupClient, client_evaluate
from app.api.protocol import FederationError
from app.models.rollout import RolloutBroadcast, TaskMode
from app.utils.metrics import MetricKind


def _broadcast(items, task_mode=TaskMode.DPA, iteration=0):
    return RolloutBroadcast(iteration=iteration, task_mode=task_mode, items=tuple(items))


class TestGroupClient:
    """Test response parsing and reward scoring"""

    def test_holds_only_its_own_targets(self, opposing_dataset):
        client = GroupClient("G01", opposing_dataset)
        assert client.dataset.groups == ("G01",)

    def test_unknown_group(self, opposing_dataset):
        with pytest.raises(ValueError, match="no targets"):
            GroupClient("G09", opposing_dataset)

    def test_perfect_answer(self, opposing_dataset):
        report = GroupClient("G01", opposing_dataset).evaluate(_broadcast([("q1", "1.00,0.00")]))
        assert report.rewards == pytest.approx((1.0,))
        assert report.group == "G01"

    def test_garbage_answer(self, opposing_dataset):
        report = GroupClient("G01", opposing_dataset).evaluate(_broadcast([("q1", "garbage")]))
        assert report.rewards == (0.0,)

    def test_half_answer(self, opposing_dataset):
        report = GroupClient("G01", opposing_dataset).evaluate(_broadcast([("q1", "0.50,0.50")]))
        assert report.rewards[0] == pytest.approx(0.73541, abs=1e-5)

    def test_opposed_groups_disagree(self, opposing_dataset):
        broadcast = _broadcast([("q1", "1.00,0.00"), ("q2", "0.00,1.00")], iteration=3)
        first = client_evaluate(GroupClient("G01", opposing_dataset), broadcast)
        second = client_evaluate(GroupClient("G02", opposing_dataset), broadcast)
        assert first.rewards == pytest.approx((1.0, 0.15))
        assert second.rewards == pytest.approx((0.15, 1.0))
        assert first.iteration == second.iteration == 3

    def test_renormalized_answer_keeps_partial_format_credit(self, opposing_dataset):
        report = GroupClient("G01", opposing_dataset).evaluate(_broadcast([("q1", "0.80,0.80")]))
        assert report.rewards[0] == pytest.approx(0.85 * 0.68872 + 0.15 * 2 / 3, abs=1e-5)

    def test_unknown_question(self, opposing_dataset):
        with pytest.raises(FederationError, match="no question"):
            GroupClient("G01", opposing_dataset).evaluate(_broadcast([("q42", "1.00,0.00")]))

    def test_metric_task_mismatch(self, opposing_dataset):
        client = GroupClient("G01", opposing_dataset, metric=MetricKind.BORDA)
        with pytest.raises(FederationError, match="does not apply"):
            client.evaluate(_broadcast([("q1", "1.00,0.00")]))

    def test_opa_scoring(self, opposing_dataset):
        client = GroupClient("G02", opposing_dataset, metric=MetricKind.BORDA)
        report = client.evaluate(_broadcast([("q1", "B,A"), ("q1", "A,B")], task_mode=TaskMode.OPA))
        assert report.rewards == pytest.approx((1.0, 0.15))

    @pytest.mark.parametrize("omega", [-0.1, 1.1])
    def test_omega_range(self, opposing_dataset, omega):
        with pytest.raises(ValueError, match="omega"):
            GroupClient("G01", opposing_dataset, omega=omega)

    def test_pure_metric_blend(self, opposing_dataset):
        client = GroupClient("G01", opposing_dataset, metric=MetricKind.COSINE, omega=1.0)
        report = client.evaluate(_broadcast([("q1", "0.50,0.50")]))
        assert report.rewards[0] == pytest.approx(0.85355, abs=1e-5)
