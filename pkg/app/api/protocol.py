"""
Federation Protocol - Newline-delimited JSON messages exchanged between server and groups

Every message is one UTF-8 line holding {"type", "iter", "payload"}. Rewards travel as
shortest round-trip decimal strings so both transports see bit-identical floats.
No payload model has a field for target distributions.
"""

import json
import logging
import socket
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..config import config
from ..models.rollout import RewardReport, RolloutBroadcast, TaskMode

logger = logging.getLogger(__name__)

MSG_HELLO = "hello"
MSG_ROLLOUT = "rollout"
MSG_REWARD_REPORT = "reward_report"
MSG_ERROR = "error"
MSG_SHUTDOWN = "shutdown"
MESSAGE_TYPES = (MSG_HELLO, MSG_ROLLOUT, MSG_REWARD_REPORT, MSG_ERROR, MSG_SHUTDOWN)


class ProtocolError(Exception):
    """Exception raised for malformed or unexpected wire messages"""

    def __init__(self, message: str, unknown_type: bool = False):
        super().__init__(message)
        self.unknown_type = unknown_type


class FederationError(Exception):
    """Exception raised when a federation round cannot complete"""
    pass


class ReportTimeoutError(FederationError):
    """Raised when reports are still missing at the deadline"""

    def __init__(self, iteration: int, missing_groups: List[str], deadline: Optional[float]):
        self.iteration = iteration
        self.missing_groups = sorted(missing_groups)
        self.deadline = deadline
        super().__init__(
            f"Iteration {iteration}: no report from {', '.join(self.missing_groups)} within {deadline}s"
        )


# Payload Models

class HelloPayload(BaseModel):
    """First message a group client sends after connecting"""
    model_config = ConfigDict(extra='forbid')

    group: str = Field(..., min_length=1, description="Group name")
    protocol_version: int = Field(config.PROTOCOL_VERSION, description="Wire protocol version")


class RolloutItemPayload(BaseModel):
    """One question and the policy's textual response"""
    model_config = ConfigDict(extra='forbid')

    question_id: str = Field(..., description="Question id")
    response: str = Field(..., description="Response in the answer-line grammar")


class RolloutPayload(BaseModel):
    """The rollout the server broadcasts to every group"""
    model_config = ConfigDict(extra='forbid')

    task_mode: TaskMode = Field(..., description="DPA or OPA")
    items: List[RolloutItemPayload] = Field(default_factory=list)


class RewardReportPayload(BaseModel):
    """Per-item rewards returned by one group"""
    model_config = ConfigDict(extra='forbid')

    group: str = Field(..., min_length=1)
    rewards: List[str] = Field(..., description="Rewards as decimal strings")


class ErrorPayload(BaseModel):
    """Error raised on the other side of the connection"""
    model_config = ConfigDict(extra='forbid')

    message: str
    group: Optional[str] = None


class ShutdownPayload(BaseModel):
    model_config = ConfigDict(extra='forbid')

    reason: str = "done"


PAYLOAD_MODELS = {
    MSG_HELLO: HelloPayload,
    MSG_ROLLOUT: RolloutPayload,
    MSG_REWARD_REPORT: RewardReportPayload,
    MSG_ERROR: ErrorPayload,
    MSG_SHUTDOWN: ShutdownPayload,
}


class Envelope(BaseModel):
    """A decoded message"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    type: Literal['hello', 'rollout', 'reward_report', 'error', 'shutdown']
    iter: Optional[int] = None
    payload: BaseModel


def format_reward(value: float) -> str:
    """Shortest decimal text that parses back to exactly `value`"""
    return repr(float(value))


def encode_message(msg_type: str, iteration: Optional[int], payload: BaseModel) -> str:
    """
    Encode one message as a JSON line

    Args:
        msg_type: Message type
        iteration: Iteration index, or None
        payload: Payload model matching the type

    Returns:
        str: JSON text terminated by a newline
    """
    if msg_type not in PAYLOAD_MODELS:
        raise ProtocolError(f"Unknown message type: {msg_type}", unknown_type=True)
    if not isinstance(payload, PAYLOAD_MODELS[msg_type]):
        raise ProtocolError(f"Payload {type(payload).__name__} does not match type {msg_type}")
    body = {'type': msg_type, 'iter': iteration, 'payload': payload.model_dump(mode='json')}
    return json.dumps(body, sort_keys=True, ensure_ascii=False) + "\n"


def decode_message(line: str) -> Envelope:
    """
    Decode and validate one JSON line

    Args:
        line: Raw line, with or without the trailing newline

    Returns:
        Envelope: Message with a typed payload

    Raises:
        ProtocolError: On malformed JSON, unknown type or schema violation
    """
    try:
        body = json.loads(line)
    except (json.JSONDecodeError, TypeError) as e:
        raise ProtocolError(f"Malformed message: {e}") from None
    if not isinstance(body, dict):
        raise ProtocolError("Message must be a JSON object")

    msg_type = body.get('type')
    model = PAYLOAD_MODELS.get(msg_type)
    if model is None:
        raise ProtocolError(f"Unknown message type: {msg_type!r}", unknown_type=True)

    iteration = body.get('iter')
    if iteration is not None and (not isinstance(iteration, int) or isinstance(iteration, bool)):
        raise ProtocolError(f"Invalid iteration: {iteration!r}")
    try:
        payload = model.model_validate(body.get('payload') or {})
    except ValidationError as e:
        raise ProtocolError(f"Invalid {msg_type} payload: {e}") from None
    return Envelope(type=msg_type, iter=iteration, payload=payload)


def broadcast_to_message(broadcast: RolloutBroadcast) -> str:
    """Encode a broadcast as a rollout message"""
    payload = RolloutPayload(
        task_mode=broadcast.task_mode,
        items=[RolloutItemPayload(question_id=q, response=r) for q, r in broadcast.items],
    )
    return encode_message(MSG_ROLLOUT, broadcast.iteration, payload)


def broadcast_from_envelope(envelope: Envelope) -> RolloutBroadcast:
    """Rebuild a broadcast from a decoded rollout message"""
    if envelope.type != MSG_ROLLOUT or envelope.iter is None:
        raise ProtocolError(f"Expected a rollout with an iteration, got {envelope.type}")
    payload: RolloutPayload = envelope.payload
    items: Tuple[Tuple[str, str], ...] = tuple((item.question_id, item.response) for item in payload.items)
    return RolloutBroadcast(iteration=envelope.iter, task_mode=payload.task_mode, items=items)


def report_to_message(report: RewardReport) -> str:
    """Encode a reward report with decimal-string rewards"""
    payload = RewardReportPayload(group=report.group, rewards=[format_reward(r) for r in report.rewards])
    return encode_message(MSG_REWARD_REPORT, report.iteration, payload)


def report_from_envelope(envelope: Envelope) -> RewardReport:
    """
    Rebuild a reward report from a decoded message

    Raises:
        ProtocolError: If the message is not a report or a reward is not a decimal in [0, 1]
    """
    if envelope.type != MSG_REWARD_REPORT or envelope.iter is None:
        raise ProtocolError(f"Expected a reward_report with an iteration, got {envelope.type}")
    payload: RewardReportPayload = envelope.payload
    try:
        rewards = tuple(float(text) for text in payload.rewards)
        return RewardReport(group=payload.group, iteration=envelope.iter, rewards=rewards)
    except ValueError as e:
        raise ProtocolError(f"Bad rewards from {payload.group}: {e}") from None


def error_message(message: str, iteration: Optional[int] = None, group: Optional[str] = None) -> str:
    return encode_message(MSG_ERROR, iteration, ErrorPayload(message=message, group=group))


class JsonLineChannel:
    """
    One NDJSON connection

    Reads go through a buffered file object so a line split across TCP segments, or
    several lines in one segment, are both handled.
    """

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._reader = sock.makefile('rb')

    def send_line(self, line: str) -> None:
        self.sock.sendall(line.encode('utf-8'))

    def receive(self) -> Optional[Envelope]:
        """
        Read the next message

        Returns:
            Optional[Envelope]: The message, or None when the peer closed the connection

        Raises:
            ProtocolError: If the line cannot be decoded
            socket.timeout: If the socket timeout elapses first
        """
        raw = self._reader.readline()
        if not raw:
            return None
        return decode_message(raw.decode('utf-8', errors='replace'))

    def settimeout(self, timeout: Optional[float]) -> None:
        self.sock.settimeout(timeout)

    def close(self) -> None:
        try:
            self._reader.close()
        finally:
            try:
                self.sock.close()
            except OSError:
                pass

    def peer(self) -> str:
        try:
            host, port = self.sock.getpeername()[:2]
            return f"{host}:{port}"
        except OSError:
            return "<closed>"


def payload_fields() -> Dict[str, List[str]]:
    """Field names of every payload model, by message type"""
    return {msg_type: list(model.model_fields) for msg_type, model in PAYLOAD_MODELS.items()}
