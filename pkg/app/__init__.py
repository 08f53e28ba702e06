"""
FairFed - Fair reward aggregation for federated preference alignment
"""

__version__ = "0.3.0"
__author__ = "FairFed Team"

# Import core services to make them available at the app level
from .services import get_service, ServiceRegistry
