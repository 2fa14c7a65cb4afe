"""Frame delivery between pairing parties.

Two interchangeable transports are provided.  ``SimNetwork`` is a
deterministic, tick-driven datagram network with drop/reorder knobs and
attacker taps.  ``LoopbackNetwork`` sends real UDP datagrams over
127.0.0.1.  Both carry the out-of-band (spoken) channel in-process, since
the OOB channel is physical co-location rather than networking.
"""

from __future__ import annotations

import heapq
import random
import select
import socket
import time
from dataclasses import dataclass, field
from typing import Optional

from .protocol.ksc import Ksc
from .protocol.messages import MAX_FRAME


class UnknownEndpoint(KeyError):
    pass


class FrameTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Datagram:
    src: str
    dst: str
    payload: bytes


@dataclass(frozen=True)
class OobUtterance:
    ksc: Ksc
    speaker: str


@dataclass
class NetworkTap:
    """Passive eavesdropper on in-band traffic."""

    frames: list[Datagram] = field(default_factory=list)


@dataclass
class OobTap:
    """Co-located eavesdropper on the spoken channel."""

    utterances: list[OobUtterance] = field(default_factory=list)


@dataclass(frozen=True)
class SimNetConfig:
    drop_prob: float = 0.0
    reorder_prob: float = 0.0
    latency_ticks: int = 1
    network_tap: Optional[NetworkTap] = None
    oob_tap: Optional[OobTap] = None
    tick_seconds: float = 0.01
    # A reordered frame waiting for a successor is released after this many ticks.
    reorder_hold_ticks: int = 5

    def __post_init__(self) -> None:
        for name in ("drop_prob", "reorder_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.latency_ticks < 0 or self.reorder_hold_ticks < 1:
            raise ValueError("latency_ticks must be >= 0 and reorder_hold_ticks >= 1")
        if self.network_tap is not None and self.oob_tap is not None:
            raise ValueError("an attacker cannot tap the network and the OOB channel at once")


@dataclass(frozen=True)
class DeliveryReceipt:
    seq: int
    due: Optional[int]
    dropped: bool = False
    held: bool = False


def _check_size(frame: bytes) -> None:
    if len(frame) > MAX_FRAME:
        raise FrameTooLarge(f"frame of {len(frame)} bytes exceeds {MAX_FRAME}")


class _OobMixin:
    oob_tap: Optional[OobTap]

    def _init_oob(self) -> None:
        self._oob: dict[str, list[OobUtterance]] = {}

    def speak_oob(self, utterance: OobUtterance) -> list[str]:
        """Deliver to every co-located party except the speaker; returns the listeners."""
        listeners = [ep for ep in self._oob if ep != utterance.speaker]
        for ep in listeners:
            self._oob[ep].append(utterance)
        if self.oob_tap is not None:
            self.oob_tap.utterances.append(utterance)
        return listeners

    def hear_oob(self, endpoint: str) -> Optional[OobUtterance]:
        inbox = self._oob.get(endpoint)
        return inbox.pop(0) if inbox else None


class SimNetwork(_OobMixin):
    def __init__(self, config: SimNetConfig = SimNetConfig(), seed: int = 0):
        self.config = config
        self.oob_tap = config.oob_tap
        self.now = 0
        self.traffic: list[Datagram] = []
        self._rng = random.Random(f"simnet/{seed}")
        self._seq = 0
        self._queues: dict[str, list[tuple[int, int, Datagram]]] = {}
        self._held: dict[str, list[tuple[int, int, Datagram]]] = {}
        self._init_oob()

    @property
    def seconds(self) -> float:
        return self.now * self.config.tick_seconds

    def register(self, endpoint: str, colocated: bool = True) -> None:
        self._queues.setdefault(endpoint, [])
        self._held.setdefault(endpoint, [])
        if colocated:
            self._oob.setdefault(endpoint, [])

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def send(self, frame: bytes, to: str, src: str = "") -> DeliveryReceipt:
        if to not in self._queues:
            raise UnknownEndpoint(to)
        _check_size(frame)
        dg = Datagram(src, to, bytes(frame))
        self.traffic.append(dg)
        seq = self._next_seq()
        cfg = self.config
        if cfg.drop_prob and self._rng.random() < cfg.drop_prob:
            return DeliveryReceipt(seq, None, dropped=True)
        due = self.now + cfg.latency_ticks
        if cfg.reorder_prob and self._rng.random() < cfg.reorder_prob:
            self._held[to].append((self.now + cfg.reorder_hold_ticks, seq, dg))
            return DeliveryReceipt(seq, None, held=True)
        heapq.heappush(self._queues[to], (due, seq, dg))
        # Anything held for this destination now trails the frame just sent.
        for _, _, held in self._held[to]:
            heapq.heappush(self._queues[to], (due, self._next_seq(), held))
        self._held[to].clear()
        return DeliveryReceipt(seq, due)

    def _release_expired_holds(self) -> None:
        for ep, held in self._held.items():
            keep = []
            for release_at, seq, dg in held:
                if release_at <= self.now:
                    heapq.heappush(self._queues[ep], (self.now + self.config.latency_ticks, seq, dg))
                else:
                    keep.append((release_at, seq, dg))
            held[:] = keep

    def recv(self, endpoint: str) -> Optional[Datagram]:
        if endpoint not in self._queues:
            raise UnknownEndpoint(endpoint)
        self._release_expired_holds()
        queue = self._queues[endpoint]
        if queue and queue[0][0] <= self.now:
            dg = heapq.heappop(queue)[2]
            if self.config.network_tap is not None:
                self.config.network_tap.frames.append(dg)
            return dg
        return None

    def next_event_tick(self) -> Optional[int]:
        """Earliest tick at which a queued or held frame becomes deliverable."""
        ticks = [q[0][0] for q in self._queues.values() if q]
        ticks += [r for held in self._held.values() for r, _, _ in held]
        return min(ticks) if ticks else None

    def in_flight(self) -> bool:
        return self.next_event_tick() is not None

    def advance_to(self, tick: int) -> None:
        if tick < self.now:
            raise ValueError("simulated time cannot run backwards")
        self.now = tick
        self._release_expired_holds()

    def advance(self, ticks: int = 1) -> None:
        self.advance_to(self.now + ticks)

    def close(self) -> None:
        pass


class LoopbackNetwork(_OobMixin):
    """Real UDP datagrams on localhost; one socket per registered endpoint."""

    def __init__(self, host: str = "127.0.0.1", oob_tap: Optional[OobTap] = None):
        self.host = host
        self.oob_tap = oob_tap
        self.traffic: list[Datagram] = []
        self._socks: dict[str, socket.socket] = {}
        self._names: dict[tuple[str, int], str] = {}
        self._start = time.monotonic()
        self._init_oob()

    @property
    def seconds(self) -> float:
        return time.monotonic() - self._start

    def register(self, endpoint: str, colocated: bool = True, port: int = 0) -> tuple[str, int]:
        if endpoint in self._socks:
            return self._socks[endpoint].getsockname()
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.bind((self.host, port))
        sock.setblocking(False)
        addr = sock.getsockname()
        self._socks[endpoint] = sock
        self._names[addr] = endpoint
        if colocated:
            self._oob.setdefault(endpoint, [])
        return addr

    def address_of(self, endpoint: str) -> tuple[str, int]:
        if endpoint not in self._socks:
            raise UnknownEndpoint(endpoint)
        return self._socks[endpoint].getsockname()

    def send(self, frame: bytes, to: str, src: str) -> DeliveryReceipt:
        if to not in self._socks:
            raise UnknownEndpoint(to)
        if src not in self._socks:
            raise UnknownEndpoint(src)
        _check_size(frame)
        self._socks[src].sendto(frame, self.address_of(to))
        self.traffic.append(Datagram(src, to, bytes(frame)))
        return DeliveryReceipt(len(self.traffic), None)

    def recv(self, endpoint: str) -> Optional[Datagram]:
        sock = self._socks.get(endpoint)
        if sock is None:
            raise UnknownEndpoint(endpoint)
        try:
            payload, addr = sock.recvfrom(MAX_FRAME + 1)
        except BlockingIOError:
            return None
        return Datagram(self._names.get(addr, f"{addr[0]}:{addr[1]}"), endpoint, payload)

    def wait(self, timeout: float) -> bool:
        """Block until some endpoint has a datagram or ``timeout`` seconds pass."""
        ready, _, _ = select.select(list(self._socks.values()), [], [], max(timeout, 0.0))
        return bool(ready)

    def close(self) -> None:
        for sock in self._socks.values():
            sock.close()
        self._socks.clear()

    def __enter__(self) -> "LoopbackNetwork":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
