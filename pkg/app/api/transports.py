"""
Transports - How the server gets a rollout to every group and the reports back
"""

import logging
import socket
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor, wait
from typing import Dict, List, Optional, Sequence, Tuple

from ..config import config
from ..models.rollout import RewardReport, RolloutBroadcast
from .group_client import GroupClient
from .protocol import (
    MSG_ERROR,
    MSG_HELLO,
    MSG_REWARD_REPORT,
    MSG_SHUTDOWN,
    FederationError,
    JsonLineChannel,
    ProtocolError,
    ReportTimeoutError,
    ShutdownPayload,
    broadcast_from_envelope,
    broadcast_to_message,
    decode_message,
    encode_message,
    error_message,
    report_from_envelope,
    report_to_message,
)

logger = logging.getLogger(__name__)


class Transport(ABC):
    """Delivers a broadcast to every group and returns one report per group"""

    def __init__(self, groups: Sequence[str]):
        self.groups: Tuple[str, ...] = tuple(groups)

    @abstractmethod
    def collect(self, broadcast: RolloutBroadcast) -> List[RewardReport]:
        """
        Broadcast a rollout and wait for every report

        Args:
            broadcast: Rollout of the iteration

        Returns:
            List[RewardReport]: One report per group

        Raises:
            ReportTimeoutError: If some groups did not report before the deadline
            FederationError: If a group reported an error
        """
        pass

    def close(self) -> None:
        """Release connections and workers"""
        pass

    def __enter__(self) -> 'Transport':
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


class InProcessTransport(Transport):
    """
    Evaluates clients on a thread pool inside the server process

    Messages still pass through the wire encoding, so rewards are identical to what the
    TCP transport delivers.
    """

    def __init__(self, clients: Sequence[GroupClient], deadline: Optional[float] = None,
                 max_workers: Optional[int] = None):
        super().__init__([c.group for c in clients])
        if len(set(self.groups)) != len(self.groups):
            raise FederationError(f"Duplicate group clients: {self.groups}")
        self.clients = {c.group: c for c in clients}
        self.deadline = deadline
        self._executor = ThreadPoolExecutor(max_workers=max_workers or min(len(clients), config.MAX_WORKERS) or 1,
                                            thread_name_prefix="group-client")

    def _round_trip(self, client: GroupClient, line: str) -> RewardReport:
        broadcast = broadcast_from_envelope(decode_message(line))
        report = client.evaluate(broadcast)
        return report_from_envelope(decode_message(report_to_message(report)))

    def collect(self, broadcast: RolloutBroadcast) -> List[RewardReport]:
        line = broadcast_to_message(broadcast)
        futures = {g: self._executor.submit(self._round_trip, self.clients[g], line) for g in self.groups}
        done, pending = wait(list(futures.values()), timeout=self.deadline)
        if pending:
            for future in pending:
                future.cancel()
            missing = [g for g, f in futures.items() if f in pending]
            raise ReportTimeoutError(broadcast.iteration, missing, self.deadline)

        reports = []
        for g, future in futures.items():
            try:
                reports.append(future.result())
            except (FederationError, ProtocolError, ValueError) as e:
                raise FederationError(f"Group {g} failed on iteration {broadcast.iteration}: {e}") from e
        return reports

    def close(self) -> None:
        self._executor.shutdown(wait=True, cancel_futures=True)


class TcpTransport(Transport):
    """
    Server side of the NDJSON protocol

    `start` binds the listening socket; `accept_groups` waits for a hello from every
    expected group. Port 0 picks a free port, available as `port` after `start`.
    """

    def __init__(self, groups: Sequence[str], host: Optional[str] = None, port: Optional[int] = None,
                 deadline: Optional[float] = None, accept_timeout: Optional[float] = None):
        super().__init__(groups)
        self.host = host or config.FEDERATION_HOST
        self.port = config.FEDERATION_PORT if port is None else port
        self.deadline = config.REPORT_DEADLINE if deadline is None else deadline
        self.accept_timeout = config.CONNECT_TIMEOUT if accept_timeout is None else accept_timeout
        self.channels: Dict[str, JsonLineChannel] = {}
        self._server: Optional[socket.socket] = None

    def start(self) -> int:
        """
        Bind and listen

        Returns:
            int: The bound port
        """
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((self.host, self.port))
        server.listen(len(self.groups))
        self._server = server
        self.port = server.getsockname()[1]
        logger.info(f"Federation server listening on {self.host}:{self.port} for {len(self.groups)} groups")
        return self.port

    def accept_groups(self) -> None:
        """
        Accept connections until every expected group has said hello

        Raises:
            FederationError: If the groups are not all connected within the accept timeout
        """
        if self._server is None:
            self.start()
        deadline = time.monotonic() + self.accept_timeout
        while len(self.channels) < len(self.groups):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                missing = sorted(set(self.groups) - set(self.channels))
                raise FederationError(f"Groups never connected: {', '.join(missing)}")
            self._server.settimeout(remaining)
            try:
                sock, address = self._server.accept()
            except socket.timeout:
                continue
            self._handshake(JsonLineChannel(sock), remaining)

    def _handshake(self, channel: JsonLineChannel, timeout: float) -> None:
        channel.settimeout(timeout)
        try:
            envelope = channel.receive()
        except (ProtocolError, socket.timeout, OSError) as e:
            logger.warning(f"Handshake with {channel.peer()} failed: {e}")
            self._reject(channel, f"Bad handshake: {e}")
            return

        if envelope is None or envelope.type != MSG_HELLO:
            self._reject(channel, "Expected hello")
            return
        hello = envelope.payload
        if hello.protocol_version != config.PROTOCOL_VERSION:
            self._reject(channel, f"Unsupported protocol version {hello.protocol_version}")
            return
        if hello.group not in self.groups or hello.group in self.channels:
            self._reject(channel, f"Unexpected or duplicate group {hello.group}")
            return
        self.channels[hello.group] = channel
        logger.info(f"Group {hello.group} joined from {channel.peer()}")

    def _reject(self, channel: JsonLineChannel, message: str) -> None:
        try:
            channel.send_line(error_message(message))
        except OSError:
            pass
        channel.close()

    def collect(self, broadcast: RolloutBroadcast) -> List[RewardReport]:
        missing_connections = [g for g in self.groups if g not in self.channels]
        if missing_connections:
            raise FederationError(f"Groups not connected: {', '.join(missing_connections)}")

        line = broadcast_to_message(broadcast)
        for g in self.groups:
            self.channels[g].send_line(line)

        deadline = time.monotonic() + self.deadline
        reports = []
        missing = []
        for g in self.groups:
            channel = self.channels[g]
            channel.settimeout(max(deadline - time.monotonic(), 1e-3))
            try:
                envelope = channel.receive()
            except socket.timeout:
                missing.append(g)
                continue
            except ProtocolError as e:
                if e.unknown_type:
                    self._reject(channel, str(e))
                    del self.channels[g]
                raise FederationError(f"Group {g} sent a bad message: {e}") from e

            if envelope is None:
                raise FederationError(f"Group {g} disconnected during iteration {broadcast.iteration}")
            if envelope.type == MSG_ERROR:
                raise FederationError(f"Group {g} reported an error: {envelope.payload.message}")
            if envelope.type != MSG_REWARD_REPORT:
                raise FederationError(f"Group {g} sent {envelope.type} instead of a reward report")

            report = report_from_envelope(envelope)
            if report.group != g:
                raise FederationError(f"Connection of {g} delivered a report for {report.group}")
            reports.append(report)

        if missing:
            raise ReportTimeoutError(broadcast.iteration, missing, self.deadline)
        return reports

    def close(self) -> None:
        shutdown = encode_message(MSG_SHUTDOWN, None, ShutdownPayload())
        for g, channel in list(self.channels.items()):
            try:
                channel.send_line(shutdown)
            except OSError:
                logger.debug(f"Could not send shutdown to {g}")
            channel.close()
        self.channels.clear()
        if self._server is not None:
            self._server.close()
            self._server = None
