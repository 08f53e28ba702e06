"""
Strategies package - Reward aggregation strategies for the federation server
"""

import logging
from typing import Dict, Optional, Type

from ..models.experiment import AppaConfig, StrategySpec
from .base_strategy import BaseStrategy

logger = logging.getLogger(__name__)

# Strategy registry
STRATEGY_REGISTRY: Dict[str, Type[BaseStrategy]] = {}


def register_strategy(strategy_name: str, strategy_class: Type[BaseStrategy]) -> None:
    """
    Register a strategy class

    Args:
        strategy_name: Name of the strategy
        strategy_class: Strategy class
    """
    STRATEGY_REGISTRY[strategy_name] = strategy_class
    logger.debug(f"Registered strategy: {strategy_name}")


def get_strategy(strategy_name: str) -> Optional[Type[BaseStrategy]]:
    """
    Get a strategy class by name

    Args:
        strategy_name: Name of the strategy

    Returns:
        The strategy class or None if not found
    """
    return STRATEGY_REGISTRY.get(strategy_name)


def create_strategy(spec: StrategySpec, appa_config: Optional[AppaConfig] = None) -> BaseStrategy:
    """
    Create a strategy instance from its configuration

    Args:
        spec: Strategy selection
        appa_config: Aggregation settings shared by all strategies

    Returns:
        BaseStrategy: The strategy instance

    Raises:
        ValueError: If the strategy is not registered
    """
    strategy_class = get_strategy(spec.name)
    if strategy_class is None:
        logger.error(f"Strategy not found: {spec.name}")
        raise ValueError(f"Unknown strategy: {spec.name}")

    if spec.name == 'fixed_alpha':
        return strategy_class(appa_config, alpha=spec.alpha)
    if spec.name == 'min':
        return strategy_class(appa_config, granularity=spec.min_granularity)
    return strategy_class(appa_config)


def _register_builtin_strategies() -> None:
    """Register all built-in strategies"""
    from .appa_strategy import AppaStrategy
    from .average_strategy import AverageStrategy
    from .fixed_alpha_strategy import FixedAlphaStrategy
    from .min_strategy import MinStrategy

    register_strategy("average", AverageStrategy)
    register_strategy("min", MinStrategy)
    register_strategy("fixed_alpha", FixedAlphaStrategy)
    register_strategy("appa", AppaStrategy)


# Initialize the registry
_register_builtin_strategies()
