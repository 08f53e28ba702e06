"""
Unit tests for held-out evaluation: alignment scores, summaries and reports
"""

import pytest

from app.models.evaluation import EvaluationReport, TrainingResult
from app.models.experiment import PolicyConfig
from app.models.rollout import TaskMode
from app.policy.tabular_policy import TabularPolicy
from app.services.dataset_service import generate_dataset
from app.services.evaluation_service import (
    EvaluationError,
    EvaluationService,
    evaluate_outputs,
    group_alignment_score,
    question_rewards,
    summarize,
)
from app.utils.metrics import MetricKind


class TestAlignmentScore:
    """Test per-group alignment scores"""

    def test_perfect_outputs(self, opposing_dataset):
        outputs = {"q1": "1.00,0.00", "q2": "1.00,0.00"}
        assert group_alignment_score(outputs, opposing_dataset, "G01", MetricKind.JS,
                                     test_ids=["q1", "q2"]) == pytest.approx(1.0)

    def test_one_right_one_wrong(self, opposing_dataset):
        outputs = {"q1": "1.00,0.00", "q2": "0.00,1.00"}
        assert group_alignment_score(outputs, opposing_dataset, "G01", MetricKind.JS,
                                     test_ids=["q1", "q2"]) == pytest.approx(0.5)

    def test_defaults_to_test_split(self, opposing_dataset):
        assert group_alignment_score({"q2": "0.00,1.00"}, opposing_dataset, "G02", MetricKind.JS) == pytest.approx(1.0)

    def test_empty_test_set(self, opposing_dataset):
        with pytest.raises(EvaluationError, match="empty test set"):
            group_alignment_score({}, opposing_dataset, "G01", MetricKind.JS, test_ids=[])

    def test_missing_output(self, opposing_dataset):
        with pytest.raises(EvaluationError, match="No output"):
            group_alignment_score({}, opposing_dataset, "G01", MetricKind.JS)

    def test_no_format_blending(self, opposing_dataset):
        rewards = question_rewards({"q2": "0.80,0.80"}, opposing_dataset, "G01", MetricKind.JS, ["q2"])
        assert rewards[0] == pytest.approx(0.68872, abs=1e-5)

    def test_unparseable_scores_zero(self, opposing_dataset):
        rewards = question_rewards({"q2": "??"}, opposing_dataset, "G01", MetricKind.COSINE, ["q2"])
        assert rewards.tolist() == [0.0]


class TestSummarize:
    """Test the mean and minimum over groups"""

    def test_two_groups(self):
        assert summarize({"A": 0.8, "B": 0.6}) == pytest.approx((0.7, 0.6))

    def test_single_group(self):
        assert summarize({"A": 0.42}) == (0.42, 0.42)

    def test_mean_over_groups(self, opposing_dataset):
        outputs = {"q1": "1.00,0.00", "q2": "1.00,0.00"}
        per_group = {g: group_alignment_score(outputs, opposing_dataset, g, MetricKind.JS, ["q1", "q2"])
                     for g in opposing_dataset.groups}
        assert per_group == pytest.approx({"G01": 1.0, "G02": 0.0})
        assert summarize(per_group) == pytest.approx((0.5, 0.0))

    def test_empty(self):
        with pytest.raises(EvaluationError):
            summarize({})


class TestEvaluateOutputs:
    """Test full evaluation reports"""

    def test_report(self, opposing_dataset):
        report = evaluate_outputs({"q2": "0.50,0.50"}, opposing_dataset, MetricKind.JS, "average", 3)
        assert report.per_group_as["G01"] == pytest.approx(report.per_group_as["G02"])
        assert report.fi == pytest.approx(1.0)
        assert report.format_score == 1.0
        assert report.min_as <= report.avg_as
        assert report.row()['strategy'] == "average"

    def test_training_question_leak_rejected(self, opposing_dataset):
        with pytest.raises(EvaluationError, match="non-test"):
            evaluate_outputs({"q1": "1.00,0.00", "q2": "1.00,0.00"}, opposing_dataset, MetricKind.JS, "appa", 0)

    def test_identical_groups_give_fi_one(self, small_spec):
        dataset = generate_dataset(small_spec.model_copy(update={'heterogeneity': 0.0}))
        policy = TabularPolicy(TaskMode.DPA, dataset.questions, PolicyConfig(init_scale=1.0), seed=2)
        reports = EvaluationService().evaluate(policy, dataset, "appa", 0)
        assert [r.metric for r in reports] == ["js", "wasserstein", "cosine"]
        for report in reports:
            assert report.fi == pytest.approx(1.0)
            assert report.min_as == pytest.approx(report.avg_as)

    def test_service_evaluates_only_test_questions(self, small_dataset):
        policy = TabularPolicy(TaskMode.DPA, small_dataset.questions)
        outputs = EvaluationService().policy_outputs(policy, small_dataset)
        assert set(outputs) == set(small_dataset.question_set.test_ids)


class TestReportModels:
    """Test report validation and serialization"""

    def test_min_above_avg_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            EvaluationReport("a", 0, "js", {"A": 0.5}, avg_as=0.5, min_as=0.6, fi=1.0, format_score=1.0)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="fi"):
            EvaluationReport("a", 0, "js", {"A": 0.5}, avg_as=0.5, min_as=0.5, fi=1.5, format_score=1.0)

    def test_dict_round_trip(self):
        report = EvaluationReport("appa", 1, "js", {"A": 0.7, "B": 0.5}, 0.6, 0.5, 0.9, 1.0)
        assert EvaluationReport.from_dict(report.to_dict()) == report
        assert report.spider == {"A": 0.7, "B": 0.5}

    def test_average_branch_in_tail(self):
        result = TrainingResult("appa", 0, 10, "runs", branch_trace=["adaptive"] * 9 + ["average"])
        assert result.average_branch_in_tail(0.1)
        result.branch_trace = ["average"] + ["adaptive"] * 9
        assert not result.average_branch_in_tail(0.1)
