"""
Integration tests for strategy comparisons, weight traces and the command line
"""

import json
import os

import pandas as pd
import pytest

import main
from app.config import config
from app.models.experiment import StrategySpec
from app.services.dataset_service import load_dataset
from app.services.experiment_service import (
    COMPARISON_COLUMNS,
    COMPARISON_CSV,
    SPIDER_JSON,
    SUMMARY_CSV,
    WEIGHT_TRACE_JSON,
    ExperimentService,
    run_directory,
)
from app.services.training_service import CHECKPOINT, DIAGNOSTICS_LOG


class TestCompareStrategies:
    """Test comparison runs and their report files"""

    def test_comparison_files(self, fast_experiment, tmp_path):
        out_dir = str(tmp_path / "compare")
        strategies = [StrategySpec.parse("average"), StrategySpec.parse("appa")]
        result = ExperimentService().compare_strategies(fast_experiment, strategies, [0], out_dir=out_dir)

        table = pd.read_csv(os.path.join(out_dir, COMPARISON_CSV))
        assert list(table.columns) == COMPARISON_COLUMNS
        assert len(table) == 2 * 3
        assert set(table['strategy']) == {"average", "appa"}
        assert set(table['metric']) == {"js", "wasserstein", "cosine"}
        assert (table['min_as'] <= table['avg_as'] + 1e-9).all()

        summary = pd.read_csv(os.path.join(out_dir, SUMMARY_CSV))
        assert {'strategy', 'metric', 'runs', 'fi_mean', 'min_as_max'} <= set(summary.columns)
        assert (summary['runs'] == 1).all()

        with open(os.path.join(out_dir, SPIDER_JSON), 'r', encoding='utf-8') as f:
            spider = json.load(f)
        assert set(spider) == {"average", "appa"}
        assert set(spider["appa"]["js"]) == {"G01", "G02", "G03"}
        assert spider == result.spider

        assert [r.strategy for r in result.training] == ["average", "appa"]
        assert all(r.success for r in result.training)
        assert os.path.exists(os.path.join(run_directory(out_dir, "appa", 0), "evaluation.json"))

    def test_same_seed_shares_initial_policy(self, fast_experiment, tmp_path):
        experiment = fast_experiment.with_overrides(iterations=0)
        strategies = [StrategySpec.parse("average"), StrategySpec.parse("min")]
        result = ExperimentService().compare_strategies(experiment, strategies, [2], out_dir=str(tmp_path))
        average = result.reports_for("average", "js")
        minimum = result.reports_for("min", "js")
        assert average['avg_as'].tolist() == minimum['avg_as'].tolist()
        assert average['min_as'].tolist() == minimum['min_as'].tolist()

    def test_requires_strategies_and_seeds(self, fast_experiment):
        service = ExperimentService()
        with pytest.raises(ValueError, match="strategy"):
            service.compare_strategies(fast_experiment, [], [0])
        with pytest.raises(ValueError, match="seed"):
            service.compare_strategies(fast_experiment, [StrategySpec.parse("min")], [])


class TestDiagnoseWeights:
    """Test the weight trace export"""

    def test_trace_from_run(self, fast_experiment, tmp_path):
        service = ExperimentService()
        service.compare_strategies(fast_experiment, [StrategySpec.parse("appa")], [0], out_dir=str(tmp_path))
        run_dir = run_directory(str(tmp_path), "appa", 0)

        trace = service.diagnose_weights(run_dir)

        assert [entry['iteration'] for entry in trace] == list(range(5))
        for entry in trace:
            assert set(entry['alpha']) == {"G01", "G02", "G03"}
            assert sum(entry['alpha'].values()) == pytest.approx(1.0)
            assert entry['branch'] in ("average", "adaptive")
        with open(os.path.join(run_dir, WEIGHT_TRACE_JSON), 'r', encoding='utf-8') as f:
            assert json.load(f) == trace

    def test_explicit_diagnostics_file(self, tmp_path):
        diagnostics = tmp_path / DIAGNOSTICS_LOG
        snapshot = {'iteration': 1, 'fi': 0.9, 'branch': 'average', 'alpha': {'A': 0.5, 'B': 0.5},
                    'history': {'A': 0.1, 'B': 0.1}}
        diagnostics.write_text(json.dumps(snapshot) + "\n\n", encoding='utf-8')
        out_path = str(tmp_path / "trace.json")

        trace = ExperimentService().diagnose_weights(str(diagnostics), out_path)

        assert trace == [{'iteration': 0, 'fi': 0.9, 'branch': 'average', 'alpha': {'A': 0.5, 'B': 0.5},
                          'history': {'A': 0.1, 'B': 0.1}, 'effective_weights': None}]
        assert os.path.exists(out_path)

    def test_missing_diagnostics(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="No aggregation diagnostics"):
            ExperimentService().diagnose_weights(str(tmp_path))


class TestCommandLine:
    """Test the main entry point end to end"""

    def setup_method(self):
        self.saved = (config.DATA_DIR, config.LOGS_DIR, config.OUTPUT_DIR)

    def teardown_method(self):
        config.DATA_DIR, config.LOGS_DIR, config.OUTPUT_DIR = self.saved

    @pytest.fixture
    def workspace(self, tmp_path, fast_experiment):
        config.DATA_DIR = str(tmp_path / "data")
        config.LOGS_DIR = str(tmp_path / "logs")
        config.OUTPUT_DIR = str(tmp_path / "runs")
        config_path = tmp_path / "experiment.json"
        config_path.write_text(fast_experiment.with_overrides(iterations=3).to_json(), encoding='utf-8')
        return tmp_path, str(config_path)

    def test_gen_data(self, workspace):
        tmp_path, _ = workspace
        output = str(tmp_path / "generated.ndjson")
        assert main.main(["gen-data", "--groups", "2", "--questions", "6", "--profile-prior", "0.5",
                          "--output", output]) == 0
        dataset = load_dataset(output)
        assert dataset.groups == ("G01", "G02")
        assert len(dataset.questions) == 6

    def test_train_evaluate_and_diagnose(self, workspace):
        tmp_path, config_path = workspace
        out_dir = str(tmp_path / "out")
        assert main.main(["--config", config_path, "--out", out_dir, "train", "--strategy", "appa"]) == 0

        run_dir = run_directory(out_dir, "appa", 0)
        assert os.path.exists(os.path.join(run_dir, CHECKPOINT))

        assert main.main(["evaluate", "--run", run_dir]) == 0
        with open(os.path.join(run_dir, "evaluation.json"), 'r', encoding='utf-8') as f:
            reports = json.load(f)
        assert [r['metric'] for r in reports] == ["js", "wasserstein", "cosine"]

        assert main.main(["diagnose-weights", "--run", run_dir]) == 0
        assert os.path.exists(os.path.join(run_dir, WEIGHT_TRACE_JSON))

    def test_compare(self, workspace):
        tmp_path, config_path = workspace
        out_dir = str(tmp_path / "cmp")
        argv = ["--config", config_path, "--out", out_dir, "compare",
                "--strategies", "average", "alpha=-inf", "--seeds", "0", "--iterations", "2"]
        assert main.main(argv) == 0
        table = pd.read_csv(os.path.join(out_dir, COMPARISON_CSV))
        assert set(table['strategy']) == {"average", "alpha=-inf"}
        assert os.path.isdir(run_directory(out_dir, "alpha=-inf", 0))

    def test_errors_return_one(self, workspace):
        tmp_path, _ = workspace
        assert main.main(["evaluate", "--run", str(tmp_path / "missing")]) == 1
        assert main.main(["train", "--strategy", "borda"]) == 1
        assert main.main(["serve-client", "--server", "no-port", "--group", "G01",
                          "--dataset", str(tmp_path / "none.ndjson")]) == 1
