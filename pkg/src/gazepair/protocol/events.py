"""Events that drive the pairing state machines, and what they emit."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .ksc import Ksc
from .messages import Message

OPEN_LOBBY = "open_lobby"
BEGIN = "begin"
CAPTURE = "capture"
JOIN = "join"


@dataclass(frozen=True)
class Received:
    message: Message
    sender: str


@dataclass(frozen=True)
class Command:
    name: str


@dataclass(frozen=True)
class Tick:
    now: float


@dataclass(frozen=True)
class OobHeard:
    ksc: Ksc


Event = Union[Received, Command, Tick, OobHeard]


@dataclass(frozen=True)
class Send:
    to: str
    message: Message
