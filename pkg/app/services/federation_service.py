"""
Federation Service - Group clients, transports and the aggregation round
"""

import logging
import threading
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..api.group_client import GroupClient, run_group_client
from ..api.protocol import FederationError
from ..api.transports import InProcessTransport, TcpTransport, Transport
from ..models.dataset import PreferenceDataset
from ..models.rollout import RewardMatrix, RolloutBroadcast
from ..strategies.base_strategy import BaseStrategy
from ..strategies.fairness import AggregationResult
from ..utils.metrics import MetricKind

logger = logging.getLogger(__name__)

TRANSPORT_INPROC = "inproc"
TRANSPORT_TCP = "tcp"
TRANSPORT_REMOTE = "remote"


def build_clients(dataset: PreferenceDataset, metric: MetricKind, omega: float) -> List[GroupClient]:
    """One client per group, each holding only its own targets"""
    return [GroupClient(group=str(g), dataset=dataset.slice_for_group(g), metric=metric, omega=omega)
            for g in dataset.groups]


def run_round(transport: Transport,
              broadcast: RolloutBroadcast,
              strategy: BaseStrategy) -> Tuple[np.ndarray, RewardMatrix, AggregationResult]:
    """
    One federation round: broadcast, collect every report, aggregate

    No aggregation starts until every group has reported. The strategy's state is
    left untouched; commit `result.next_state` after the policy update.

    Args:
        transport: Connection to the groups
        broadcast: Rollout of the iteration
        strategy: Aggregation strategy

    Returns:
        Tuple of (per-item aggregates, reward matrix, aggregation result)

    Raises:
        ReportTimeoutError: If some groups missed the deadline
        FederationError: If a group failed
    """
    reports = transport.collect(broadcast)
    try:
        matrix = RewardMatrix.from_reports(broadcast.iteration, transport.groups, reports, len(broadcast))
    except ValueError as e:
        raise FederationError(f"Iteration {broadcast.iteration}: {e}") from e
    result = strategy.aggregate(matrix)
    return result.aggregates, matrix, result


class LocalTcpFederation(TcpTransport):
    """TCP transport whose group clients run as threads of this process"""

    def __init__(self, clients: Sequence[GroupClient], host: Optional[str] = None, port: Optional[int] = 0,
                 deadline: Optional[float] = None):
        super().__init__([c.group for c in clients], host=host, port=port, deadline=deadline)
        self.clients = list(clients)
        self._threads: List[threading.Thread] = []

    def launch(self) -> 'LocalTcpFederation':
        """Start listening, start one client thread per group and wait for their hellos"""
        port = self.start()
        for client in self.clients:
            thread = threading.Thread(target=self._serve, args=(client, port), name=f"group-{client.group}",
                                      daemon=True)
            thread.start()
            self._threads.append(thread)
        self.accept_groups()
        return self

    def _serve(self, client: GroupClient, port: int) -> None:
        try:
            run_group_client(self.host, port, client)
        except Exception as e:
            logger.error(f"Local client {client.group} stopped: {e}", exc_info=True)

    def close(self) -> None:
        super().close()
        for thread in self._threads:
            thread.join(timeout=5.0)
        self._threads.clear()


class FederationService:
    """
    Service for connecting the server to its groups
    """

    def __init__(self):
        """Initialize the federation service"""
        logger.info("FederationService initialized")

    def build_clients(self, dataset: PreferenceDataset, metric: MetricKind, omega: float) -> List[GroupClient]:
        return build_clients(dataset, metric, omega)

    def open_transport(self, kind: str, clients: Sequence[GroupClient],
                       deadline: Optional[float] = None, port: Optional[int] = 0) -> Transport:
        """
        Open a transport to the given clients

        Args:
            kind: "inproc", "tcp" or "remote"
            clients: Group clients; for TCP they run as local threads, for remote only
                their group names are used
            deadline: Report deadline in seconds; transport default when None
            port: TCP port, 0 for any free port; remote uses FEDERATION_PORT

        Returns:
            Transport: Ready to collect
        """
        if kind == TRANSPORT_INPROC:
            return InProcessTransport(clients, deadline=deadline)
        if kind == TRANSPORT_TCP:
            return LocalTcpFederation(clients, port=port, deadline=deadline).launch()
        if kind == TRANSPORT_REMOTE:
            transport = TcpTransport([c.group for c in clients], deadline=deadline)
            transport.start()
            logger.info(f"Waiting for {len(clients)} serve-client processes on port {transport.port}")
            try:
                transport.accept_groups()
            except Exception:
                transport.close()
                raise
            return transport
        raise ValueError(f"Unknown transport: {kind}")

    def run_round(self, transport: Transport, broadcast: RolloutBroadcast,
                  strategy: BaseStrategy) -> Tuple[np.ndarray, RewardMatrix, AggregationResult]:
        return run_round(transport, broadcast, strategy)
