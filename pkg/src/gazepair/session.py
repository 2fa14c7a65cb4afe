"""End-to-end pairing sessions: drive host and clients over a transport.

Every event fed to a state machine can be recorded as one JSON object per
line.  Because the machines are pure functions of ``(state, event)``, such a
log replays to identical final states and identical outgoing frames.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .gaze import GazeSensorModel, Trigger
from .geometry import GridConfig
from .keys import KDF_ITERATIONS
from .protocol import (
    BEGIN,
    CAPTURE,
    JOIN,
    OPEN_LOBBY,
    ClientConfig,
    ClientPhase,
    ClientState,
    Command,
    DecodeError,
    FailureCause,
    HostConfig,
    HostPhase,
    HostState,
    Ksc,
    OobHeard,
    Received,
    Tick,
    client_step,
    decode_message,
    encode_message,
    host_step,
    kind_name,
)
from .protocol.host import DEFAULT_TIMEOUT
from .transport import Datagram, LoopbackNetwork, OobUtterance, SimNetConfig, SimNetwork

HOST = "host"


def sub_seed(seed: int, label: str) -> int:
    """Independent 64-bit seed for a named component of a seeded run."""
    digest = hashlib.blake2b(f"{seed}/{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def client_name(i: int) -> str:
    return f"client-{i}"


@dataclass(frozen=True)
class SessionParams:
    participants: int = 2
    grid: GridConfig = field(default_factory=GridConfig)
    ksc_length: int = 3
    sensor: GazeSensorModel = field(default_factory=GazeSensorModel)
    seed: int = 0
    host_gazes: bool = True
    kdf_iterations: int = KDF_ITERATIONS
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if self.participants < 2:
            raise ValueError("pairing needs at least two participants")

    def host_config(self) -> HostConfig:
        return HostConfig(
            expected_clients=self.participants - 1,
            grid=self.grid,
            ksc_length=self.ksc_length,
            sensor=self.sensor,
            seed=sub_seed(self.seed, HOST),
            host_gazes=self.host_gazes,
            kdf_iterations=self.kdf_iterations,
            timeout=self.timeout,
        )

    def client_config(self, i: int) -> ClientConfig:
        return ClientConfig(
            host=HOST,
            grid=self.grid,
            sensor=self.sensor,
            seed=sub_seed(self.seed, client_name(i)),
            kdf_iterations=self.kdf_iterations,
            timeout=self.timeout,
        )


# -- config (de)serialization for the event log ----------------------------

def _grid_to_dict(g: GridConfig) -> dict:
    return dataclasses.asdict(g)


def _sensor_to_dict(m: GazeSensorModel) -> dict:
    d = dataclasses.asdict(m)
    d["trigger"] = m.trigger.value
    return d


def config_to_dict(cfg: Union[HostConfig, ClientConfig]) -> dict:
    d = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
    d["grid"] = _grid_to_dict(cfg.grid)
    d["sensor"] = _sensor_to_dict(cfg.sensor)
    return d


def host_config_from_dict(d: dict) -> HostConfig:
    d = dict(d)
    d["grid"] = GridConfig(**d["grid"])
    d["sensor"] = GazeSensorModel(**{**d["sensor"], "trigger": Trigger(d["sensor"]["trigger"])})
    return HostConfig(**d)


def client_config_from_dict(d: dict) -> ClientConfig:
    d = dict(d)
    d["grid"] = GridConfig(**d["grid"])
    d["sensor"] = GazeSensorModel(**{**d["sensor"], "trigger": Trigger(d["sensor"]["trigger"])})
    return ClientConfig(**d)


def event_to_record(party: str, event) -> dict:
    if isinstance(event, Received):
        return {"type": "event", "party": party, "event": "recv", "from": event.sender,
                "frame": encode_message(event.message).hex()}
    if isinstance(event, Command):
        return {"type": "event", "party": party, "event": "command", "name": event.name}
    if isinstance(event, Tick):
        return {"type": "event", "party": party, "event": "tick", "now": event.now}
    if isinstance(event, OobHeard):
        return {"type": "event", "party": party, "event": "oob", "ksc": str(event.ksc)}
    raise TypeError(f"cannot log {event!r}")


def record_to_event(rec: dict):
    kind = rec["event"]
    if kind == "recv":
        return Received(decode_message(bytes.fromhex(rec["frame"])), rec["from"])
    if kind == "command":
        return Command(rec["name"])
    if kind == "tick":
        return Tick(float(rec["now"]))
    if kind == "oob":
        return OobHeard(Ksc.parse(rec["ksc"]))
    raise ValueError(f"unknown event kind {kind!r}")


# -- running a session -------------------------------------------------------

def session_outcome(host: HostState, clients: Iterable[ClientState]) -> tuple[bool, FailureCause]:
    """Overall success and the most informative failure cause across parties."""
    clients = list(clients)
    if host.phase is HostPhase.PAIRED and all(c.phase is ClientPhase.PAIRED for c in clients):
        return True, FailureCause.NONE
    causes = {host.cause, *(c.cause for c in clients)}
    for cause in (FailureCause.MISSED_CAPTURE, FailureCause.SECRET_MISMATCH,
                  FailureCause.TIMEOUT, FailureCause.PROTOCOL_ERROR):
        if cause in causes:
            return False, cause
    # Some party never reached a terminal phase.
    return False, FailureCause.TIMEOUT


@dataclass
class SessionResult:
    params: SessionParams
    host: HostState
    clients: dict[str, ClientState]
    traffic: list[Datagram]
    utterances: list[OobUtterance]
    message_counts: Counter
    log: list[dict] = field(default_factory=list)
    undecodable: int = 0

    @property
    def parties(self) -> dict[str, Union[HostState, ClientState]]:
        return {HOST: self.host, **self.clients}

    @property
    def success(self) -> bool:
        return session_outcome(self.host, self.clients.values())[0]

    @property
    def failure_cause(self) -> FailureCause:
        return session_outcome(self.host, self.clients.values())[1]

    @property
    def keys_match(self) -> bool:
        keys = [p.key for p in self.parties.values()]
        return all(k is not None for k in keys) and len({k.raw for k in keys}) == 1

    @property
    def messages_sent(self) -> int:
        return sum(self.message_counts.values())

    def log_lines(self) -> list[str]:
        return [json.dumps(rec, sort_keys=True) for rec in self.log]


class _Driver:
    def __init__(self, params: SessionParams, net, record: bool):
        self.params = params
        self.net = net
        self.record = record
        self.log: list[dict] = []
        self.counts: Counter = Counter()
        self.undecodable = 0
        self.host = HostState(params.host_config())
        self.clients = {
            client_name(i): ClientState(params.client_config(i))
            for i in range(1, params.participants)
        }
        self.begun = False
        self.spoken: list[OobUtterance] = []
        net.register(HOST)
        for name in self.clients:
            net.register(name)
        if record:
            self.log.append({"type": "init", "party": HOST, "role": "host",
                             "config": config_to_dict(self.host.config)})
            for name, c in self.clients.items():
                self.log.append({"type": "init", "party": name, "role": "client",
                                 "config": config_to_dict(c.config)})

    def all_terminal(self) -> bool:
        return self.host.phase.terminal and all(c.phase.terminal for c in self.clients.values())

    def _emit(self, party: str, sends) -> None:
        for send in sends:
            frame = encode_message(send.message)
            self.counts[kind_name(send.message)] += 1
            if self.record:
                self.log.append({"type": "send", "party": party, "to": send.to, "frame": frame.hex()})
            self.net.send(frame, send.to, party)

    def feed(self, party: str, event) -> None:
        if self.record:
            self.log.append(event_to_record(party, event))
        if party == HOST:
            self.host, sends, utterance = host_step(self.host, event)
            self._emit(party, sends)
            if utterance is not None:
                if self.record:
                    self.log.append({"type": "speak", "party": party, "ksc": str(utterance)})
                spoken = OobUtterance(utterance, HOST)
                self.spoken.append(spoken)
                self.net.speak_oob(spoken)
        else:
            self.clients[party], sends = client_step(self.clients[party], event)
            self._emit(party, sends)

    def start(self) -> None:
        self.feed(HOST, Command(OPEN_LOBBY))
        for name in self.clients:
            self.feed(name, Command(JOIN))

    def pump(self) -> bool:
        """Deliver everything currently available; True if anything happened."""
        progressed = False
        for party in [HOST, *self.clients]:
            while (dg := self.net.recv(party)) is not None:
                progressed = True
                try:
                    message = decode_message(dg.payload)
                except DecodeError:
                    self.undecodable += 1
                    continue
                self.feed(party, Received(message, dg.src))
            while (u := self.net.hear_oob(party)) is not None:
                progressed = True
                self.feed(party, OobHeard(u.ksc))
        host = self.host
        if (not self.begun and host.phase is HostPhase.LOBBY
                and host.joined_count >= host.config.expected_clients):
            self.begun = True
            progressed = True
            self.feed(HOST, Command(BEGIN))
            if self.host.phase is HostPhase.LAYOUT_PUBLISHED:
                self.feed(HOST, Command(CAPTURE))
        return progressed

    def tick(self, now: float) -> None:
        for party, state in [(HOST, self.host), *self.clients.items()]:
            if not state.phase.terminal:
                self.feed(party, Tick(now))

    def next_deadline(self) -> float:
        states = [self.host, *self.clients.values()]
        return min(
            (s.phase_since + s.config.timeout for s in states if not s.phase.terminal),
            default=math.inf,
        )

    def result(self) -> SessionResult:
        return SessionResult(
            params=self.params,
            host=self.host,
            clients=self.clients,
            traffic=list(self.net.traffic),
            utterances=list(self.spoken),
            message_counts=self.counts,
            log=self.log,
            undecodable=self.undecodable,
        )


def _run_sim(driver: _Driver, net: SimNetwork) -> None:
    tick_s = net.config.tick_seconds
    driver.start()
    while True:
        while driver.pump():
            pass
        if driver.all_terminal():
            return
        candidates = []
        nxt = net.next_event_tick()
        if nxt is not None:
            candidates.append(max(nxt, net.now + 1))
        deadline = driver.next_deadline()
        if math.isfinite(deadline):
            # First tick strictly past the deadline.
            candidates.append(max(math.floor(deadline / tick_s) + 1, net.now + 1))
        if not candidates:
            return
        net.advance_to(min(candidates))
        driver.tick(round(net.now * tick_s, 9))


def _run_loopback(driver: _Driver, net: LoopbackNetwork, poll: float = 0.05) -> None:
    driver.start()
    while True:
        while driver.pump():
            pass
        if driver.all_terminal():
            return
        net.wait(min(poll, max(driver.next_deadline() - net.seconds, 0.0)))
        driver.tick(net.seconds)


def run_session(
    params: SessionParams,
    transport: str = "sim",
    netcfg: Optional[SimNetConfig] = None,
    record: bool = False,
) -> SessionResult:
    """Run one complete pairing attempt and return every party's final state."""
    if transport == "sim":
        net = SimNetwork(netcfg or SimNetConfig(), seed=sub_seed(params.seed, "net"))
        driver = _Driver(params, net, record)
        _run_sim(driver, net)
        return driver.result()
    if transport == "loopback":
        oob_tap = netcfg.oob_tap if netcfg is not None else None
        with LoopbackNetwork(oob_tap=oob_tap) as net:
            driver = _Driver(params, net, record)
            _run_loopback(driver, net)
            return driver.result()
    raise ValueError(f"unknown transport {transport!r}")


# -- replay ------------------------------------------------------------------

class ReplayError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class Replay:
    host: HostState
    clients: dict[str, ClientState]
    sends: list[tuple[str, str, bytes]]
    recorded_sends: list[tuple[str, str, bytes]]
    delivered: list[bytes]
    meta: list[dict]

    @property
    def traffic_matches(self) -> bool:
        return self.sends == self.recorded_sends

    @property
    def success(self) -> bool:
        return session_outcome(self.host, self.clients.values())[0]

    @property
    def failure_cause(self) -> FailureCause:
        return session_outcome(self.host, self.clients.values())[1]

    @property
    def spoken(self) -> list[Ksc]:
        return [Ksc.parse(m["ksc"]) for m in self.meta if m["type"] == "speak"]

    def summary_lines(self) -> list[str]:
        lines = []
        for name, s in [(HOST, self.host), *sorted(self.clients.items())]:
            fp = s.key.fingerprint() if s.key is not None else "-"
            lines.append(f"{name}: phase={s.phase.value} cause={s.cause.label} key={fp}")
        lines.append(f"traffic_matches={self.traffic_matches}")
        return lines


def parse_log(lines: Iterable[str]) -> list[tuple[int, dict]]:
    out = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayError(lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(rec, dict) or "type" not in rec:
            raise ReplayError(lineno, "record must be an object with a 'type' field")
        out.append((lineno, rec))
    return out


def replay_log(lines: Iterable[str]) -> Replay:
    host: Optional[HostState] = None
    clients: dict[str, ClientState] = {}
    sends: list[tuple[str, str, bytes]] = []
    recorded: list[tuple[str, str, bytes]] = []
    delivered: list[bytes] = []
    meta: list[dict] = []
    for lineno, rec in parse_log(lines):
        try:
            kind = rec["type"]
            if kind == "init":
                if rec["role"] == "host":
                    host = HostState(host_config_from_dict(rec["config"]))
                else:
                    clients[rec["party"]] = ClientState(client_config_from_dict(rec["config"]))
            elif kind == "event":
                party = rec["party"]
                event = record_to_event(rec)
                if isinstance(event, Received):
                    delivered.append(bytes.fromhex(rec["frame"]))
                if party == HOST:
                    if host is None:
                        raise ValueError("event for the host before its init record")
                    host, out, _ = host_step(host, event)
                elif party in clients:
                    clients[party], out = client_step(clients[party], event)
                else:
                    raise ValueError(f"event for unknown party {party!r}")
                sends += [(party, s.to, encode_message(s.message)) for s in out]
            elif kind == "send":
                recorded.append((rec["party"], rec["to"], bytes.fromhex(rec["frame"])))
            else:
                meta.append(rec)
        except ReplayError:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise ReplayError(lineno, f"{type(exc).__name__}: {exc}") from None
    if host is None:
        raise ReplayError(0, "log has no host init record")
    return Replay(host, clients, sends, recorded, delivered, meta)
