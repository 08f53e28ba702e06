"""
Experiment Service - Strategy comparisons across seeds and their report files
"""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from ..models.dataset import PreferenceDataset
from ..models.evaluation import EvaluationReport, TrainingResult
from ..models.experiment import ExperimentConfig, StrategySpec
from .dataset_service import DatasetService
from .evaluation_service import EvaluationService
from .training_service import DIAGNOSTICS_LOG, TrainingService

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ['strategy', 'seed', 'metric', 'fi', 'avg_as', 'min_as', 'format_score']
COMPARISON_CSV = "comparison.csv"
SUMMARY_CSV = "summary.csv"
SPIDER_JSON = "spider.json"
WEIGHT_TRACE_JSON = "weight_trace.json"


@dataclass
class ComparisonResult:
    """
    Everything a strategy comparison produced

    Attributes:
        table: One row per (strategy, seed, metric)
        summary: Mean, min and max per (strategy, metric)
        spider: strategy -> metric -> group -> mean AS over seeds
        training: Training results in run order
    """

    table: pd.DataFrame
    summary: pd.DataFrame
    spider: Dict[str, Dict[str, Dict[str, float]]]
    training: List[TrainingResult] = field(default_factory=list)

    def reports_for(self, strategy: str, metric: str) -> pd.DataFrame:
        """Rows of one strategy under one metric, ordered by seed"""
        rows = self.table[(self.table['strategy'] == strategy) & (self.table['metric'] == metric)]
        return rows.sort_values('seed').reset_index(drop=True)


def run_directory(out_dir: str, label: str, seed: int) -> str:
    safe = label.replace('=', '_').replace('/', '_')
    return os.path.join(out_dir, safe, f"seed_{seed}")


def train_and_evaluate(experiment: ExperimentConfig, dataset: PreferenceDataset,
                       out_dir: str) -> Tuple[TrainingResult, List[EvaluationReport]]:
    """
    Train one (strategy, seed) run and evaluate it on the held-out split

    Returns:
        Tuple of (training result, one evaluation report per metric)
    """
    training = TrainingService()
    result, policy, _ = training.train(experiment, dataset, out_dir)
    reports = EvaluationService().evaluate(policy, dataset, result.strategy, experiment.seed,
                                           sampling=experiment.eval_sampling, appa_config=experiment.appa)
    with open(os.path.join(out_dir, "evaluation.json"), 'w', encoding='utf-8') as f:
        json.dump([r.to_dict() for r in reports], f, indent=2, sort_keys=True)
    return result, reports


def _run_job(config_json: str, records: List[Dict[str, Any]],
             out_dir: str) -> Tuple[TrainingResult, List[EvaluationReport]]:
    experiment = ExperimentConfig.model_validate_json(config_json)
    dataset = PreferenceDataset.from_records(records)
    return train_and_evaluate(experiment, dataset, out_dir)


def build_tables(reports: Sequence[EvaluationReport]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Comparison table and its per-strategy summary

    Returns:
        Tuple of (rows with COMPARISON_COLUMNS, summary with mean/min/max of fi, avg_as,
        min_as and format_score per strategy and metric)
    """
    table = pd.DataFrame([r.row() for r in reports], columns=COMPARISON_COLUMNS)
    if table.empty:
        return table, pd.DataFrame()
    values = ['fi', 'avg_as', 'min_as', 'format_score']
    summary = table.groupby(['strategy', 'metric'], sort=False)[values].agg(['mean', 'min', 'max'])
    summary.columns = [f"{name}_{stat}" for name, stat in summary.columns]
    summary = summary.reset_index()
    summary.insert(2, 'runs', table.groupby(['strategy', 'metric'], sort=False).size().values)
    return table, summary


def build_spider(reports: Sequence[EvaluationReport]) -> Dict[str, Dict[str, Dict[str, float]]]:
    """strategy -> metric -> group -> mean AS over seeds"""
    rows = []
    for r in reports:
        for group, value in r.per_group_as.items():
            rows.append({'strategy': r.strategy, 'metric': r.metric, 'group': group, 'as': value})
    if not rows:
        return {}
    frame = pd.DataFrame(rows).groupby(['strategy', 'metric', 'group'], sort=False)['as'].mean()
    spider: Dict[str, Dict[str, Dict[str, float]]] = {}
    for (strategy, metric, group), value in frame.items():
        spider.setdefault(strategy, {}).setdefault(metric, {})[group] = float(value)
    return spider


def weight_trace(diagnostics_path: str) -> List[Dict[str, Any]]:
    """
    Read an aggregation diagnostics file into per-iteration trace records

    Returns:
        List[Dict[str, Any]]: iteration, fi, branch, alpha and history per iteration
    """
    trace = []
    with open(diagnostics_path, 'r', encoding='utf-8') as f:
        for line in f:
            if not line.strip():
                continue
            snapshot = json.loads(line)
            trace.append({
                'iteration': snapshot['iteration'] - 1,
                'fi': snapshot['fi'],
                'branch': snapshot['branch'],
                'alpha': snapshot.get('alpha_used', snapshot['alpha']),
                'history': snapshot['history'],
                'effective_weights': snapshot.get('effective_weights'),
            })
    return trace


class ExperimentService:
    """
    Service for running and reporting strategy comparisons
    """

    def __init__(self, dataset_service: Optional[DatasetService] = None):
        """Initialize the experiment service"""
        self.dataset_service = dataset_service or DatasetService()
        logger.info("ExperimentService initialized")

    def compare_strategies(self, template: ExperimentConfig, strategies: Sequence[StrategySpec],
                           seeds: Sequence[int], out_dir: Optional[str] = None,
                           max_workers: int = 1) -> ComparisonResult:
        """
        Train and evaluate every (strategy, seed) pair on one shared dataset

        Runs with the same seed start from the same initial policy. Each run writes to
        its own subdirectory; the table, summary and spider files go to `out_dir`.

        Args:
            template: Configuration every run starts from
            strategies: Strategies to compare
            seeds: Run seeds
            out_dir: Report directory; the template's output_dir when omitted
            max_workers: Parallel runs; 1 runs sequentially in this process

        Returns:
            ComparisonResult: Tables and spider values
        """
        if not strategies:
            raise ValueError("compare_strategies needs at least one strategy")
        if not seeds:
            raise ValueError("compare_strategies needs at least one seed")

        out_dir = out_dir or template.output_dir
        os.makedirs(out_dir, exist_ok=True)
        dataset = self.dataset_service.for_experiment(template)
        jobs = []
        for spec in strategies:
            for seed in seeds:
                experiment = template.with_overrides(strategy=spec, seed=seed)
                jobs.append((experiment, run_directory(out_dir, spec.label, seed)))
        logger.info(f"Comparing {len(strategies)} strategies over {len(seeds)} seeds ({len(jobs)} runs)")

        if max_workers > 1 and len(jobs) > 1:
            records = dataset.to_records()
            with ProcessPoolExecutor(max_workers=max_workers) as pool:
                futures = [pool.submit(_run_job, e.model_dump_json(), records, d) for e, d in jobs]
                outcomes = [f.result() for f in futures]
        else:
            outcomes = [train_and_evaluate(e, dataset, d) for e, d in jobs]

        training = [result for result, _ in outcomes]
        reports = [report for _, run_reports in outcomes for report in run_reports]
        table, summary = build_tables(reports)
        spider = build_spider(reports)

        table.to_csv(os.path.join(out_dir, COMPARISON_CSV), index=False, float_format='%.6f')
        summary.to_csv(os.path.join(out_dir, SUMMARY_CSV), index=False, float_format='%.6f')
        with open(os.path.join(out_dir, SPIDER_JSON), 'w', encoding='utf-8') as f:
            json.dump(spider, f, indent=2, sort_keys=True)
        logger.info(f"Comparison written to {out_dir}")
        return ComparisonResult(table=table, summary=summary, spider=spider, training=training)

    def diagnose_weights(self, run_dir: str, out_path: Optional[str] = None) -> List[Dict[str, Any]]:
        """
        Turn a run's aggregation diagnostics into weight_trace.json

        Args:
            run_dir: Run directory or a diagnostics file
            out_path: Output file; weight_trace.json next to the diagnostics when omitted

        Returns:
            List[Dict[str, Any]]: The trace records
        """
        path = os.path.join(run_dir, DIAGNOSTICS_LOG) if os.path.isdir(run_dir) else run_dir
        if not os.path.exists(path):
            raise FileNotFoundError(f"No aggregation diagnostics at {path}")
        trace = weight_trace(path)
        out_path = out_path or os.path.join(os.path.dirname(path), WEIGHT_TRACE_JSON)
        with open(out_path, 'w', encoding='utf-8') as f:
            json.dump(trace, f, indent=2, sort_keys=True)
        logger.info(f"Weight trace with {len(trace)} iterations written to {out_path}")
        return trace
