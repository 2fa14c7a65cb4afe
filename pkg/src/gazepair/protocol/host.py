"""Host-side pairing state machine.

``host_step`` is a pure transition: it never mutates its input state and its
result depends only on ``(state, event)``.  All randomness is drawn from
generators seeded by ``HostConfig.seed`` at the moment it is needed.
"""

from __future__ import annotations

import dataclasses
import enum
import random
from dataclasses import dataclass, field
from typing import Optional

from ..gaze import GazeSensorModel, MissedCapture, build_shared_secret, expected_secret
from ..geometry import GridConfig, HologramLayout, generate_layout
from ..keys import (
    KDF_ITERATIONS,
    SessionRandomness,
    SymmetricKey,
    Verdict,
    derive_key,
    generate_session_randomness,
    verify_confirmation,
)
from .events import BEGIN, CAPTURE, OPEN_LOBBY, Command, OobHeard, Received, Send, Tick
from .ksc import DEFAULT_KSC_LENGTH, Ksc, generate_ksc
from .messages import (
    ConfirmationMessage,
    FailureCause,
    JoinAck,
    JoinRequest,
    LayoutMessage,
    ResultMessage,
    SessionRandMessage,
)

DEFAULT_TIMEOUT = 30.0


class HostPhase(enum.Enum):
    IDLE = "Idle"
    LOBBY = "Lobby"
    LAYOUT_PUBLISHED = "LayoutPublished"
    AWAITING_CONFIRMATIONS = "AwaitingConfirmations"
    PAIRED = "Paired"
    FAILED = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (HostPhase.PAIRED, HostPhase.FAILED)


@dataclass(frozen=True)
class HostConfig:
    expected_clients: int = 1
    grid: GridConfig = field(default_factory=GridConfig)
    ksc_length: int = DEFAULT_KSC_LENGTH
    sensor: GazeSensorModel = field(default_factory=GazeSensorModel)
    seed: int = 0
    # False: the host computes its secret from the layout instead of gazing.
    host_gazes: bool = True
    kdf_iterations: int = KDF_ITERATIONS
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if self.expected_clients < 1:
            raise ValueError("a host expects at least one client")
        if not 1 <= self.ksc_length <= self.grid.hologram_count:
            raise ValueError("ksc_length must lie in [1, hologram_count]")


@dataclass
class HostState:
    config: HostConfig
    phase: HostPhase = HostPhase.IDLE
    now: float = 0.0
    phase_since: float = 0.0
    clients: dict[int, str] = field(default_factory=dict)
    join_nonces: dict[int, int] = field(default_factory=dict)
    layout: Optional[HologramLayout] = None
    randomness: Optional[SessionRandomness] = None
    ksc: Optional[Ksc] = None
    key: Optional[SymmetricKey] = None
    pending: list[ConfirmationMessage] = field(default_factory=list)
    confirmations: dict[int, Verdict] = field(default_factory=dict)
    cause: FailureCause = FailureCause.NONE
    anomalies: int = 0
    notices: list[str] = field(default_factory=list)

    @property
    def joined_count(self) -> int:
        return len(self.clients)

    def copy(self) -> "HostState":
        return dataclasses.replace(
            self,
            clients=dict(self.clients),
            join_nonces=dict(self.join_nonces),
            pending=list(self.pending),
            confirmations=dict(self.confirmations),
            notices=list(self.notices),
        )


HostOutput = tuple[HostState, list[Send], Optional[Ksc]]


def _enter(s: HostState, phase: HostPhase) -> None:
    s.phase = phase
    s.phase_since = s.now


def _finish(s: HostState, cause: FailureCause) -> list[Send]:
    _enter(s, HostPhase.PAIRED if cause is FailureCause.NONE else HostPhase.FAILED)
    s.cause = cause
    result = ResultMessage(cause is FailureCause.NONE, cause)
    return [Send(addr, result) for _, addr in sorted(s.clients.items())]


def _protocol_error(s: HostState, what: str) -> list[Send]:
    s.notices.append(f"protocol error: {what} in phase {s.phase.value}")
    return _finish(s, FailureCause.PROTOCOL_ERROR)


def _verify(s: HostState, msg: ConfirmationMessage) -> list[Send]:
    conf = msg.confirmation
    if conf.client_id not in s.clients:
        s.anomalies += 1
        return []
    if conf.client_id in s.confirmations:
        return []
    verdict = verify_confirmation(s.key, s.randomness, conf)
    s.confirmations[conf.client_id] = verdict
    if not verdict:
        s.notices.append(f"client {conf.client_id} failed verification: {verdict.value}")
        return _finish(s, FailureCause.SECRET_MISMATCH)
    if len(s.confirmations) == len(s.clients):
        return _finish(s, FailureCause.NONE)
    return []


def _begin(s: HostState) -> tuple[list[Send], Ksc]:
    cfg = s.config
    rng = random.Random(cfg.seed)
    s.layout = generate_layout(cfg.grid, rng)
    s.ksc = generate_ksc(cfg.ksc_length, rng, cfg.grid.hologram_count)
    s.randomness = generate_session_randomness(rng)
    _enter(s, HostPhase.LAYOUT_PUBLISHED)
    out = []
    for _, addr in sorted(s.clients.items()):
        out.append(Send(addr, LayoutMessage(s.layout)))
        out.append(Send(addr, SessionRandMessage(s.randomness)))
    return out, s.ksc


def _capture(s: HostState) -> list[Send]:
    cfg = s.config
    if cfg.host_gazes:
        try:
            secret = build_shared_secret(
                s.ksc, s.layout, cfg.sensor, cfg.grid, random.Random(f"{cfg.seed}/gaze")
            )
        except MissedCapture:
            return _finish(s, FailureCause.MISSED_CAPTURE)
    else:
        secret = expected_secret(s.ksc, s.layout, cfg.grid)
    s.key = derive_key(secret, s.randomness.salt, cfg.kdf_iterations)
    _enter(s, HostPhase.AWAITING_CONFIRMATIONS)
    out: list[Send] = []
    pending, s.pending = s.pending, []
    for msg in pending:
        if s.phase.terminal:
            break
        out += _verify(s, msg)
    return out


def host_step(state: HostState, event) -> HostOutput:
    s = state.copy()
    phase = s.phase
    if phase.terminal:
        if isinstance(event, Tick):
            s.now = event.now
        return s, [], None

    if isinstance(event, Tick):
        s.now = event.now
        if phase is not HostPhase.IDLE and s.now - s.phase_since > s.config.timeout:
            s.notices.append(f"timed out in phase {phase.value}")
            return s, _finish(s, FailureCause.TIMEOUT), None
        return s, [], None

    if isinstance(event, Command):
        if event.name == OPEN_LOBBY and phase is HostPhase.IDLE:
            _enter(s, HostPhase.LOBBY)
            return s, [], None
        if event.name == BEGIN and phase is HostPhase.LOBBY:
            if not s.clients:
                return s, _protocol_error(s, "begin with an empty lobby"), None
            out, utterance = _begin(s)
            return s, out, utterance
        if event.name == CAPTURE and phase is HostPhase.LAYOUT_PUBLISHED:
            return s, _capture(s), None
        return s, _protocol_error(s, f"command {event.name!r}"), None

    if isinstance(event, Received):
        msg = event.message
        if isinstance(msg, JoinRequest):
            known = s.join_nonces.get(msg.nonce)
            if known is not None and s.clients[known] == event.sender:
                # Retransmitted request: acknowledge again, count once.
                return s, [Send(event.sender, JoinAck(msg.nonce, known))], None
            if phase is not HostPhase.LOBBY:
                return s, _protocol_error(s, "late JoinRequest"), None
            client_id = len(s.clients) + 1
            s.clients[client_id] = event.sender
            s.join_nonces[msg.nonce] = client_id
            if len(s.clients) > s.config.expected_clients:
                s.notices.append(
                    f"{len(s.clients)} clients joined, {s.config.expected_clients} expected"
                )
            return s, [Send(event.sender, JoinAck(msg.nonce, client_id))], None
        if isinstance(msg, ConfirmationMessage):
            if phase is HostPhase.LAYOUT_PUBLISHED:
                s.pending.append(msg)
                return s, [], None
            if phase is HostPhase.AWAITING_CONFIRMATIONS:
                return s, _verify(s, msg), None
        return s, _protocol_error(s, f"{type(msg).__name__} from {event.sender}"), None

    if isinstance(event, OobHeard):
        # The host is the speaker; hearing its own cue changes nothing.
        return s, [], None

    raise TypeError(f"unknown host event {event!r}")
