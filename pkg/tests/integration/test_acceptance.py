"""
Full-size directional checks on the heterogeneous 8-group scenario

Deselected by default; run with `pytest -m slow`.
"""

import os

import pytest

from app.config import config
from app.models.experiment import ExperimentConfig, StrategySpec
from app.services.experiment_service import ExperimentService

CONFIG_PATH = os.path.join(os.path.dirname(__file__), '..', '..', 'configs', 'acceptance.json')
SEEDS = [0, 1, 2, 3, 4]


@pytest.fixture(scope="module")
def comparison(tmp_path_factory):
    """Average, Min and adaptive aggregation over five seeds"""
    out_dir = str(tmp_path_factory.mktemp("acceptance"))
    template = ExperimentConfig.from_file(CONFIG_PATH).with_overrides(output_dir=out_dir)
    strategies = [StrategySpec.parse(label) for label in ("average", "min", "appa")]
    return ExperimentService().compare_strategies(template, strategies, SEEDS, max_workers=config.MAX_WORKERS)


@pytest.mark.slow
class TestHeterogeneousScenario:
    """Test the fairness claims on the synthetic scenario"""

    def test_scenario_settings(self):
        template = ExperimentConfig.from_file(CONFIG_PATH)
        assert (template.dataset.groups, template.dataset.questions) == (8, 60)
        assert template.dataset.heterogeneity == 0.7
        assert template.dataset.profile_prior < 1.0
        assert template.iterations == 200

    def test_worst_group_beats_average(self, comparison):
        appa = comparison.reports_for("appa", "js")
        average = comparison.reports_for("average", "js")
        wins = int((appa['min_as'] > average['min_as']).sum())
        assert wins >= 4, f"appa beat average on Min AS in {wins}/5 seeds"

    def test_mean_alignment_beats_min(self, comparison):
        appa = comparison.reports_for("appa", "js")
        minimum = comparison.reports_for("min", "js")
        wins = int((appa['avg_as'] > minimum['avg_as']).sum())
        assert wins >= 4, f"appa beat min on Avg AS in {wins}/5 seeds"

    def test_fairness_index_rises(self, comparison):
        runs = [r for r in comparison.training if r.strategy == "appa"]
        assert len(runs) == len(SEEDS)
        rising = sum(1 for r in runs if r.fi_trace[-1] >= r.fi_trace[0])
        assert rising >= 4, f"final FI >= first FI in {rising}/5 seeds"

    def test_average_branch_activates(self, comparison):
        runs = [r for r in comparison.training if r.strategy == "appa"]
        activated = sum(1 for r in runs if r.average_branch_in_tail(0.1))
        assert activated >= 3, f"average branch taken in the last 10% of iterations in {activated}/5 seeds"
