"""
Group Client - Scores broadcast rollouts against one group's private targets
"""

import logging
import socket
import time
from dataclasses import dataclass
from typing import Optional

from ..config import config
from ..models.dataset import PreferenceDataset
from ..models.rollout import RewardReport, RolloutBroadcast, RolloutItem, TaskMode
from ..utils.metrics import MetricKind, metric_reward
from ..utils.response_format import DEFAULT_OMEGA, blend_final_reward, parse_dpa, parse_opa
from .protocol import (
    MSG_HELLO,
    MSG_ROLLOUT,
    MSG_SHUTDOWN,
    FederationError,
    HelloPayload,
    JsonLineChannel,
    ProtocolError,
    broadcast_from_envelope,
    encode_message,
    error_message,
    report_to_message,
)

logger = logging.getLogger(__name__)


@dataclass
class GroupClient:
    """
    A federated group: its name, its own targets, a metric and the blend weight

    Clients hold no state between rounds. Only scalar rewards leave the client.
    """

    group: str
    dataset: PreferenceDataset
    metric: MetricKind = MetricKind.JS
    omega: float = DEFAULT_OMEGA

    def __post_init__(self):
        if self.group not in self.dataset.groups:
            raise ValueError(f"Dataset has no targets for group {self.group}")
        if len(self.dataset.groups) > 1:
            self.dataset = self.dataset.slice_for_group(self.group)
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must be in [0, 1], got {self.omega}")

    def parse_item(self, task_mode: TaskMode, question_id: str, response: str) -> RolloutItem:
        """
        Parse one response against its question's grammar

        Raises:
            FederationError: If the question id is unknown to this group
        """
        try:
            question = self.dataset.question(question_id)
        except ValueError:
            raise FederationError(f"Group {self.group} has no question {question_id}") from None

        if task_mode is TaskMode.DPA:
            report = parse_dpa(response, question.k)
        else:
            report = parse_opa(response, question.option_labels)
        return RolloutItem(question_id=question_id, raw_response=response,
                           parsed=report.parsed_value, format_score=report.score)

    def score_item(self, item: RolloutItem) -> float:
        """
        Final reward of one parsed item

        Items without a usable parse earn no metric reward; the format score still counts.
        """
        metric = 0.0
        if item.parsed is not None:
            metric = metric_reward(self.metric, item.parsed, self.dataset.target(self.group, item.question_id))
        return blend_final_reward(metric, item.format_score, self.omega)

    def evaluate(self, broadcast: RolloutBroadcast) -> RewardReport:
        """
        Score every broadcast item

        Args:
            broadcast: The rollout of this iteration

        Returns:
            RewardReport: One reward per item, in broadcast order

        Raises:
            FederationError: On an unknown question or a metric that does not fit the task
        """
        if self.metric.task_mode is not broadcast.task_mode:
            raise FederationError(
                f"Group {self.group} scores {self.metric.value}, which does not apply to {broadcast.task_mode.value}"
            )
        rewards = []
        for question_id, response in broadcast.items:
            item = self.parse_item(broadcast.task_mode, question_id, response)
            rewards.append(self.score_item(item))
        logger.debug(f"Group {self.group} scored {len(rewards)} items for iteration {broadcast.iteration}")
        return RewardReport(group=self.group, iteration=broadcast.iteration, rewards=tuple(rewards))


def client_evaluate(client: GroupClient, broadcast: RolloutBroadcast) -> RewardReport:
    """Score a broadcast with one group client"""
    return client.evaluate(broadcast)


def connect_with_retry(host: str, port: int, timeout: Optional[float] = None) -> socket.socket:
    """
    Connect to the federation server, retrying until the timeout

    Args:
        host: Server host
        port: Server port
        timeout: Seconds to keep retrying; defaults to CONNECT_TIMEOUT

    Returns:
        socket.socket: Connected socket

    Raises:
        FederationError: If no connection could be made in time
    """
    timeout = config.CONNECT_TIMEOUT if timeout is None else timeout
    deadline = time.monotonic() + timeout
    delay = 0.05
    while True:
        try:
            return socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            if time.monotonic() >= deadline:
                raise FederationError(f"Could not connect to {host}:{port}: {e}") from e
            time.sleep(delay)
            delay = min(delay * 2, 1.0)


def run_group_client(host: str, port: int, client: GroupClient,
                     connect_timeout: Optional[float] = None) -> int:
    """
    Serve one group over TCP until the server shuts the connection

    Args:
        host: Server host
        port: Server port
        client: Group evaluator
        connect_timeout: Seconds to keep retrying the connection

    Returns:
        int: Number of rollouts scored
    """
    sock = connect_with_retry(host, port, connect_timeout)
    sock.settimeout(None)
    channel = JsonLineChannel(sock)
    served = 0
    logger.info(f"Group {client.group} connected to {host}:{port}")
    try:
        channel.send_line(encode_message(MSG_HELLO, None, HelloPayload(group=client.group)))
        while True:
            try:
                envelope = channel.receive()
            except ProtocolError as e:
                logger.error(f"Group {client.group} received a bad message: {e}")
                channel.send_line(error_message(str(e), group=client.group))
                break
            if envelope is None:
                logger.info(f"Server closed the connection to group {client.group}")
                break
            if envelope.type == MSG_SHUTDOWN:
                logger.info(f"Group {client.group} shutting down after {served} rollouts")
                break
            if envelope.type != MSG_ROLLOUT:
                channel.send_line(error_message(f"Unexpected message {envelope.type}", envelope.iter, client.group))
                continue

            broadcast = broadcast_from_envelope(envelope)
            try:
                report = client.evaluate(broadcast)
            except (FederationError, ValueError) as e:
                logger.error(f"Group {client.group} failed on iteration {broadcast.iteration}: {e}")
                channel.send_line(error_message(str(e), broadcast.iteration, client.group))
                continue
            channel.send_line(report_to_message(report))
            served += 1
    finally:
        channel.close()
    return served
