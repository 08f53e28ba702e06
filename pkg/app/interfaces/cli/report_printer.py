"""
Report Printer - Rich tables for evaluations, comparisons and weight traces
"""

from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from rich.console import Console
from rich.table import Table

from ...models.evaluation import EvaluationReport, TrainingResult


class ReportPrinter:
    """Renders experiment results to a rich console"""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def print_evaluation(self, reports: Sequence[EvaluationReport]) -> None:
        """One row per metric, then per-group scores"""
        if not reports:
            self.console.print("[yellow]No evaluation results[/yellow]")
            return
        table = Table(title=f"Held-out evaluation ({reports[0].strategy}, seed {reports[0].seed})")
        table.add_column("Metric", style="cyan")
        table.add_column("FI", style="green")
        table.add_column("Avg AS", style="green")
        table.add_column("Min AS", style="yellow")
        table.add_column("Format", style="magenta")
        for r in reports:
            table.add_row(r.metric, f"{r.fi:.4f}", f"{r.avg_as:.4f}", f"{r.min_as:.4f}", f"{r.format_score:.4f}")
        self.console.print(table)

        groups = Table(title="Per-group alignment")
        groups.add_column("Group", style="cyan")
        for r in reports:
            groups.add_column(r.metric, style="green")
        for g in reports[0].per_group_as:
            groups.add_row(g, *[f"{r.per_group_as[g]:.4f}" for r in reports])
        self.console.print(groups)

    def print_training(self, result: TrainingResult) -> None:
        table = Table(title=f"Training {result.strategy} (seed {result.seed})")
        table.add_column("Property", style="cyan")
        table.add_column("Value", style="green")
        table.add_row("Iterations", str(result.iterations))
        if result.fi_trace:
            table.add_row("First FI", f"{result.first_fi:.4f}")
            table.add_row("Last FI", f"{result.last_fi:.4f}")
            table.add_row("Average branch taken", str(result.branch_trace.count('average')))
        table.add_row("Output", result.output_dir)
        self.console.print(table)

    def print_comparison(self, summary: pd.DataFrame) -> None:
        """Mean and range of each column per strategy and metric"""
        if summary.empty:
            self.console.print("[yellow]No comparison results[/yellow]")
            return
        table = Table(title="Strategy comparison (mean [min, max] over seeds)")
        table.add_column("Strategy", style="cyan")
        table.add_column("Metric", style="cyan")
        table.add_column("Runs")
        for name in ('fi', 'avg_as', 'min_as', 'format_score'):
            table.add_column(name, style="green")
        for _, row in summary.iterrows():
            cells = [f"{row[f'{n}_mean']:.4f} [{row[f'{n}_min']:.4f}, {row[f'{n}_max']:.4f}]"
                     for n in ('fi', 'avg_as', 'min_as', 'format_score')]
            table.add_row(str(row['strategy']), str(row['metric']), str(row['runs']), *cells)
        self.console.print(table)

    def print_weight_trace(self, trace: List[Dict[str, Any]], head: int = 5, tail: int = 5) -> None:
        """First and last iterations of a weight trace"""
        if not trace:
            self.console.print("[yellow]Empty weight trace[/yellow]")
            return
        groups = list(trace[0]['alpha'])
        table = Table(title=f"Aggregation weights ({len(trace)} iterations)")
        table.add_column("Iter", style="cyan")
        table.add_column("FI", style="green")
        table.add_column("Branch", style="magenta")
        for g in groups:
            table.add_column(f"alpha {g}", style="yellow")

        shown = trace if len(trace) <= head + tail else trace[:head] + [None] + trace[-tail:]
        for record in shown:
            if record is None:
                table.add_row("...", "", "", *["" for _ in groups])
                continue
            table.add_row(str(record['iteration']), f"{record['fi']:.4f}", record['branch'],
                          *[f"{record['alpha'][g]:.4f}" for g in groups])
        self.console.print(table)
