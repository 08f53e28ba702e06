#!/usr/bin/env python3
"""
FairFed - Main Entry Point
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.text import Text

# Import app modules
import app
from app.api.group_client import GroupClient, run_group_client
from app.config import config
from app.interfaces.cli import ReportPrinter
from app.models.experiment import DatasetSpec, ExperimentConfig, StrategySpec
from app.policy.tabular_policy import load_checkpoint
from app.services import ServiceRegistry, get_service
from app.services.dataset_service import load_dataset
from app.services.experiment_service import run_directory
from app.services.training_service import CHECKPOINT, CONFIG_COPY
from app.utils.metrics import MetricKind

# Set up logging
logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL),
    format="%(message)s",
    datefmt="[%X]",
    handlers=[RichHandler(rich_tracebacks=True)]
)

logger = logging.getLogger("main")
console = Console()

DEFAULT_STRATEGIES = ["average", "min", "appa"]
ALPHA_SWEEP = ["alpha=-inf", "alpha=-1", "alpha=0", "alpha=1", "alpha=inf"]


def setup_command_line(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Set up command line arguments"""
    parser = argparse.ArgumentParser(
        description="Fair reward aggregation for federated preference alignment"
    )

    # Global options
    global_group = parser.add_argument_group('Global Options')
    global_group.add_argument("--config", "-c", metavar="PATH", help="Experiment configuration JSON")
    global_group.add_argument("--seed", type=int, help="Run seed (overrides the config)")
    global_group.add_argument("--out", "-o", metavar="DIR", help="Output directory (overrides the config)")
    global_group.add_argument("--transport", choices=["inproc", "tcp", "remote"], help="Federation transport")

    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    gen = subparsers.add_parser("gen-data", help="Generate a synthetic dataset file")
    gen.add_argument("--groups", type=int, help="Number of groups")
    gen.add_argument("--questions", type=int, help="Number of questions")
    gen.add_argument("--heterogeneity", type=float, help="Cross-group divergence in [0, 1]")
    gen.add_argument("--profile-prior", type=float, help="Dirichlet parameter of group profiles")
    gen.add_argument("--min-options", type=int, help="Smallest option count")
    gen.add_argument("--max-options", type=int, help="Largest option count")
    gen.add_argument("--output", metavar="PATH", help="Dataset file (default: <data dir>/dataset.ndjson)")

    train = subparsers.add_parser("train", help="Train one policy under one strategy")
    train.add_argument("--strategy", help="average | min | min_iteration | appa | alpha=<value>")
    train.add_argument("--iterations", type=int, help="Training iterations")

    evaluate = subparsers.add_parser("evaluate", help="Evaluate a trained run on the held-out split")
    evaluate.add_argument("--run", required=True, metavar="DIR", help="Run directory holding checkpoint.json")
    evaluate.add_argument("--sample", action="store_true", help="Sample instead of greedy decoding")

    compare = subparsers.add_parser("compare", help="Compare strategies over several seeds")
    compare.add_argument("--strategies", nargs="+", default=None, help="Strategy labels")
    compare.add_argument("--sweep-alpha", action="store_true", help="Add the fixed-alpha grid -inf, -1, 0, 1, inf")
    compare.add_argument("--seeds", type=int, nargs="+", default=None, help="Seeds (default: 0..4)")
    compare.add_argument("--iterations", type=int, help="Training iterations")
    compare.add_argument("--workers", type=int, default=1, help="Parallel runs")

    client = subparsers.add_parser("serve-client", help="Run one group client against a federation server")
    client.add_argument("--server", default=f"{config.FEDERATION_HOST}:{config.FEDERATION_PORT}",
                        metavar="HOST:PORT", help="Server address")
    client.add_argument("--group", required=True, help="Group name")
    client.add_argument("--dataset", required=True, metavar="PATH", help="Dataset file with this group's targets")
    client.add_argument("--metric", choices=[m.value for m in MetricKind], default="js", help="Reward metric")
    client.add_argument("--omega", type=float, default=0.85, help="Metric weight in the final reward")

    diagnose = subparsers.add_parser("diagnose-weights", help="Export and show the aggregation weight trace")
    diagnose.add_argument("--run", required=True, metavar="DIR", help="Run directory")

    return parser.parse_args(argv)


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Config file plus command-line overrides"""
    experiment = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    return experiment.with_overrides(seed=args.seed, output_dir=args.out, transport=args.transport,
                                     iterations=getattr(args, 'iterations', None))


def display_welcome() -> None:
    """Display welcome message"""
    console.print(Panel(Text("FairFed", style="bold blue"), title="Welcome", subtitle=f"v{app.__version__}"))


def cmd_gen_data(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    updates = {
        'groups': args.groups,
        'questions': args.questions,
        'heterogeneity': args.heterogeneity,
        'profile_prior': args.profile_prior,
        'min_options': args.min_options,
        'max_options': args.max_options,
        'seed': args.seed,
    }
    data = experiment.dataset.model_dump()
    data.update({key: value for key, value in updates.items() if value is not None})
    data['path'] = None
    spec = DatasetSpec.model_validate(data)

    datasets = get_service("datasets")
    dataset = datasets.generate(spec, experiment.split_ratio)
    output = args.output or os.path.join(config.DATA_DIR, "dataset.ndjson")
    datasets.save(dataset, output)
    console.print(f"[green]Wrote {len(dataset.questions)} questions for {len(dataset.groups)} groups to {output}[/green]")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    if args.strategy:
        experiment = experiment.with_overrides(strategy=StrategySpec.parse(args.strategy))
    dataset = get_service("datasets").for_experiment(experiment)
    out_dir = run_directory(experiment.output_dir, experiment.strategy.label, experiment.seed)

    result, policy, _ = get_service("training").train(experiment, dataset, out_dir)
    printer = ReportPrinter(console)
    printer.print_training(result)
    reports = get_service("evaluation").evaluate(policy, dataset, result.strategy, experiment.seed,
                                                 sampling=experiment.eval_sampling, appa_config=experiment.appa)
    printer.print_evaluation(reports)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    experiment = ExperimentConfig.from_file(os.path.join(args.run, CONFIG_COPY))
    dataset = get_service("datasets").for_experiment(experiment)
    policy, _, meta = load_checkpoint(os.path.join(args.run, CHECKPOINT), dataset.questions)
    reports = get_service("evaluation").evaluate(policy, dataset, str(meta.get('strategy', experiment.strategy.label)),
                                                 experiment.seed, sampling=args.sample or experiment.eval_sampling,
                                                 appa_config=experiment.appa)
    ReportPrinter(console).print_evaluation(reports)
    with open(os.path.join(args.run, "evaluation.json"), 'w', encoding='utf-8') as f:
        json.dump([r.to_dict() for r in reports], f, indent=2, sort_keys=True)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    labels = list(args.strategies or DEFAULT_STRATEGIES)
    if args.sweep_alpha:
        labels += [label for label in ALPHA_SWEEP if label not in labels]
    strategies = [StrategySpec.parse(label) for label in labels]
    seeds = args.seeds if args.seeds is not None else list(range(5))

    comparison = get_service("experiments").compare_strategies(experiment, strategies, seeds,
                                                               max_workers=args.workers)
    ReportPrinter(console).print_comparison(comparison.summary)
    console.print(f"[green]Reports written to {experiment.output_dir}[/green]")
    return 0


def cmd_serve_client(args: argparse.Namespace) -> int:
    host, _, port = args.server.rpartition(':')
    if not host or not port.isdigit():
        raise ValueError(f"--server must be HOST:PORT, got {args.server}")
    dataset = load_dataset(args.dataset)
    client = GroupClient(group=args.group, dataset=dataset, metric=MetricKind(args.metric), omega=args.omega)
    served = run_group_client(host, int(port), client)
    console.print(f"[green]Group {args.group} scored {served} rollouts[/green]")
    return 0


def cmd_diagnose_weights(args: argparse.Namespace) -> int:
    trace = get_service("experiments").diagnose_weights(args.run)
    ReportPrinter(console).print_weight_trace(trace)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "serve-client": cmd_serve_client,
    "diagnose-weights": cmd_diagnose_weights,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    try:
        # Parse command line arguments
        args = setup_command_line(argv)

        # Initialize services
        ServiceRegistry.initialize_services()
        config.ensure_dirs()

        display_welcome()
        return COMMANDS[args.subcommand](args)

    except Exception as e:
        logger.exception("Unexpected error in main application")
        console.print(f"[red]Error: {str(e)}[/red]")
        return 1


if __name__ == "__main__":
    sys.exit(main())
