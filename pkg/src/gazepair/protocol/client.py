"""Client-side pairing state machine (pure, like the host's)."""

from __future__ import annotations

import dataclasses
import enum
import random
from dataclasses import dataclass, field
from typing import Optional

from ..gaze import GazeSensorModel, MissedCapture, build_shared_secret
from ..geometry import GridConfig, HologramLayout
from ..keys import KDF_ITERATIONS, SessionRandomness, SymmetricKey, derive_key, make_confirmation
from .events import JOIN, Command, OobHeard, Received, Send, Tick
from .host import DEFAULT_TIMEOUT
from .ksc import Ksc
from .messages import (
    ConfirmationMessage,
    FailureCause,
    JoinAck,
    JoinRequest,
    LayoutMessage,
    ResultMessage,
    SessionRandMessage,
)


class ClientPhase(enum.Enum):
    IDLE = "Idle"
    CONNECTED = "Connected"
    LAYOUT_RECEIVED = "LayoutReceived"
    SECRET_ENTERED = "SecretEntered"
    CONFIRMATION_SENT = "ConfirmationSent"
    PAIRED = "Paired"
    FAILED = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (ClientPhase.PAIRED, ClientPhase.FAILED)


@dataclass(frozen=True)
class ClientConfig:
    host: str = "host"
    grid: GridConfig = field(default_factory=GridConfig)
    sensor: GazeSensorModel = field(default_factory=GazeSensorModel)
    seed: int = 0
    kdf_iterations: int = KDF_ITERATIONS
    timeout: float = DEFAULT_TIMEOUT


@dataclass
class ClientState:
    config: ClientConfig
    phase: ClientPhase = ClientPhase.IDLE
    now: float = 0.0
    phase_since: float = 0.0
    joining: bool = False
    client_id: Optional[int] = None
    layout: Optional[HologramLayout] = None
    randomness: Optional[SessionRandomness] = None
    ksc: Optional[Ksc] = None
    key: Optional[SymmetricKey] = None
    confirmations_sent: int = 0
    cause: FailureCause = FailureCause.NONE
    notices: list[str] = field(default_factory=list)

    @property
    def nonce(self) -> int:
        return random.Random(f"{self.config.seed}/nonce").getrandbits(32)

    def copy(self) -> "ClientState":
        return dataclasses.replace(self, notices=list(self.notices))


ClientOutput = tuple[ClientState, list[Send]]


def _enter(s: ClientState, phase: ClientPhase) -> None:
    s.phase = phase
    s.phase_since = s.now


def _fail(s: ClientState, cause: FailureCause, why: str = "") -> None:
    if why:
        s.notices.append(why)
    s.cause = cause
    _enter(s, ClientPhase.FAILED)


def _advance(s: ClientState) -> list[Send]:
    """Move forward as far as the buffered inputs allow."""
    if s.phase is ClientPhase.CONNECTED and s.layout is not None:
        _enter(s, ClientPhase.LAYOUT_RECEIVED)
    if s.phase is not ClientPhase.LAYOUT_RECEIVED or s.randomness is None or s.ksc is None:
        return []
    cfg = s.config
    try:
        secret = build_shared_secret(
            s.ksc, s.layout, cfg.sensor, cfg.grid, random.Random(f"{cfg.seed}/gaze")
        )
    except MissedCapture as exc:
        _fail(s, FailureCause.MISSED_CAPTURE, str(exc))
        return []
    _enter(s, ClientPhase.SECRET_ENTERED)
    s.key = derive_key(secret, s.randomness.salt, cfg.kdf_iterations)
    conf = make_confirmation(s.key, s.randomness, s.client_id)
    s.confirmations_sent += 1
    _enter(s, ClientPhase.CONFIRMATION_SENT)
    return [Send(cfg.host, ConfirmationMessage(conf))]


def client_step(state: ClientState, event) -> ClientOutput:
    s = state.copy()
    if isinstance(event, Tick):
        s.now = event.now
        if s.joining and not s.phase.terminal and s.now - s.phase_since > s.config.timeout:
            _fail(s, FailureCause.TIMEOUT, f"timed out in phase {s.phase.value}")
        return s, []
    if s.phase.terminal:
        return s, []

    if isinstance(event, Command):
        if event.name == JOIN and s.phase is ClientPhase.IDLE:
            if not s.joining:
                s.joining = True
                s.phase_since = s.now
            return s, [Send(s.config.host, JoinRequest(s.nonce))]
        _fail(s, FailureCause.PROTOCOL_ERROR, f"command {event.name!r} in {s.phase.value}")
        return s, []

    if isinstance(event, OobHeard):
        if s.ksc is None:
            s.ksc = event.ksc
        return s, _advance(s)

    if not isinstance(event, Received):
        raise TypeError(f"unknown client event {event!r}")

    msg = event.message
    if isinstance(msg, JoinAck):
        if s.phase is ClientPhase.IDLE and msg.nonce == s.nonce:
            s.client_id = msg.client_id
            _enter(s, ClientPhase.CONNECTED)
            return s, _advance(s)
        return s, []
    if isinstance(msg, LayoutMessage):
        if s.layout is None:
            s.layout = msg.layout
        return s, _advance(s)
    if isinstance(msg, SessionRandMessage):
        if s.randomness is None:
            s.randomness = msg.randomness
        return s, _advance(s)
    if isinstance(msg, ResultMessage):
        if msg.success and s.phase is ClientPhase.CONFIRMATION_SENT:
            _enter(s, ClientPhase.PAIRED)
        elif msg.success:
            _fail(s, FailureCause.PROTOCOL_ERROR, "success reported before confirmation")
        else:
            _fail(s, msg.cause, f"host reported failure: {msg.cause.label}")
        return s, []
    _fail(s, FailureCause.PROTOCOL_ERROR, f"unexpected {type(msg).__name__}")
    return s, []
