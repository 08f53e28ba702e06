"""
Services package - Experiment logic independent of the command-line interface
"""

import logging
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


class ServiceRegistry:
    """
    Registry of named service instances shared by the CLI and the tests

    The training service reuses the registered federation service, and the experiment
    service reuses the dataset service, so a comparison generates its dataset once.
    """
    _services: Dict[str, Any] = {}

    @classmethod
    def register(cls, service_name: str, service_instance: Any) -> None:
        """
        Register a service instance, replacing any earlier one of the same name

        Args:
            service_name: Name of the service
            service_instance: The service instance
        """
        cls._services[service_name] = service_instance
        logger.debug(f"Registered service: {service_name}")

    @classmethod
    def get(cls, service_name: str) -> Optional[Any]:
        """
        Get a registered service by name

        Args:
            service_name: Name of the service

        Returns:
            The service instance or None if not found
        """
        service = cls._services.get(service_name)
        if service is None:
            logger.warning(f"Service not found: {service_name}")
        return service

    @classmethod
    def names(cls) -> List[str]:
        return sorted(cls._services)

    @classmethod
    def initialize_services(cls) -> None:
        """Register the dataset, federation, training, evaluation and experiment services"""
        # Import services here to avoid circular imports
        from .dataset_service import DatasetService
        from .evaluation_service import EvaluationService
        from .experiment_service import ExperimentService
        from .federation_service import FederationService
        from .training_service import TrainingService

        datasets = DatasetService()
        federation = FederationService()
        cls.register("datasets", datasets)
        cls.register("federation", federation)
        cls.register("training", TrainingService(federation))
        cls.register("evaluation", EvaluationService())
        cls.register("experiments", ExperimentService(datasets))

        logger.info(f"Services initialized: {', '.join(cls.names())}")

    @classmethod
    def clear(cls) -> None:
        """Drop every registered service"""
        cls._services = {}
        logger.debug("Service registry cleared")


def get_service(service_name: str) -> Any:
    """
    Get a registered service, failing loudly when it is missing

    Args:
        service_name: Name of the service

    Returns:
        The service instance

    Raises:
        KeyError: If no service of that name is registered
    """
    service = ServiceRegistry.get(service_name)
    if service is None:
        raise KeyError(f"Service '{service_name}' is not registered (registered: {', '.join(ServiceRegistry.names()) or 'none'})")
    return service
