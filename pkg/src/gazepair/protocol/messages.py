"""In-band message set and its byte-exact frame codec.

Frame layout::

    magic "GZPR" | version u8 (0x01) | kind u8 | payload length u32 BE | payload

Payload integers are fixed-width big-endian, grid cells are three signed
bytes and byte strings carry a u16 big-endian length prefix.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import ClassVar, Union

from ..geometry import GridCell, HologramLayout
from ..keys import Confirmation, SessionRandomness

MAGIC = b"GZPR"
VERSION = 1
HEADER = struct.Struct(">4sBBI")
MAX_FRAME = 64 * 1024
MAX_PAYLOAD = MAX_FRAME - HEADER.size


class FailureCause(enum.Enum):
    NONE = 0
    MISSED_CAPTURE = 1
    SECRET_MISMATCH = 2
    TIMEOUT = 3
    PROTOCOL_ERROR = 4

    @property
    def label(self) -> str:
        return self.name.lower()


class DecodeError(ValueError):
    pass


class BadMagic(DecodeError):
    pass


class UnsupportedVersion(DecodeError):
    pass


class TruncatedFrame(DecodeError):
    pass


class LengthOverflow(DecodeError):
    pass


class UnknownKind(DecodeError):
    pass


class MalformedPayload(DecodeError):
    pass


@dataclass(frozen=True)
class JoinRequest:
    KIND: ClassVar[int] = 1
    nonce: int


@dataclass(frozen=True)
class JoinAck:
    KIND: ClassVar[int] = 2
    nonce: int
    client_id: int


@dataclass(frozen=True)
class LayoutMessage:
    KIND: ClassVar[int] = 3
    layout: HologramLayout


@dataclass(frozen=True)
class SessionRandMessage:
    KIND: ClassVar[int] = 4
    randomness: SessionRandomness


@dataclass(frozen=True)
class ConfirmationMessage:
    KIND: ClassVar[int] = 5
    confirmation: Confirmation


@dataclass(frozen=True)
class ResultMessage:
    KIND: ClassVar[int] = 6
    success: bool
    cause: FailureCause = FailureCause.NONE


Message = Union[JoinRequest, JoinAck, LayoutMessage, SessionRandMessage, ConfirmationMessage, ResultMessage]

KIND_NAMES = {
    JoinRequest.KIND: "JoinRequest",
    JoinAck.KIND: "JoinAck",
    LayoutMessage.KIND: "Layout",
    SessionRandMessage.KIND: "SessionRand",
    ConfirmationMessage.KIND: "Confirmation",
    ResultMessage.KIND: "Result",
}


def kind_name(message: Message) -> str:
    return KIND_NAMES[message.KIND]


def _blob(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise ValueError("byte string longer than 65535 bytes")
    return struct.pack(">H", len(data)) + data


def _payload(m: Message) -> bytes:
    if isinstance(m, JoinRequest):
        return struct.pack(">I", m.nonce)
    if isinstance(m, JoinAck):
        return struct.pack(">II", m.nonce, m.client_id)
    if isinstance(m, LayoutMessage):
        out = bytearray(struct.pack(">b", m.layout.depth_plane))
        for label, cell in enumerate(m.layout.cells):
            out += struct.pack(">Bbbb", label, *cell)
        return bytes(out)
    if isinstance(m, SessionRandMessage):
        return struct.pack(">Q", m.randomness.seed64)
    if isinstance(m, ConfirmationMessage):
        c = m.confirmation
        return struct.pack(">I", c.client_id) + _blob(c.ciphertext) + _blob(c.auth_tag)
    if isinstance(m, ResultMessage):
        return struct.pack(">BB", int(m.success), m.cause.value)
    raise TypeError(f"not a protocol message: {m!r}")


def encode_message(m: Message) -> bytes:
    try:
        payload = _payload(m)
    except struct.error as exc:
        raise ValueError(f"field out of range in {m!r}: {exc}") from None
    if len(payload) > MAX_PAYLOAD:
        raise ValueError("payload exceeds the maximum frame size")
    return HEADER.pack(MAGIC, VERSION, m.KIND, len(payload)) + payload


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise MalformedPayload("payload ends inside a field")
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values

    def blob(self) -> bytes:
        (n,) = self.take(">H")
        if self.pos + n > len(self.data):
            raise MalformedPayload("byte string runs past the payload")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def done(self) -> None:
        if self.pos != len(self.data):
            raise MalformedPayload(f"{len(self.data) - self.pos} unexpected trailing payload bytes")


def _decode_layout(r: _Reader) -> HologramLayout:
    (depth,) = r.take(">b")
    remaining = len(r.data) - r.pos
    if remaining % 4:
        raise MalformedPayload("layout payload is not a whole number of cells")
    cells: dict[int, GridCell] = {}
    for _ in range(remaining // 4):
        label, x, y, z = r.take(">Bbbb")
        if label in cells:
            raise MalformedPayload(f"duplicate hologram label {label}")
        cells[label] = GridCell(x, y, z)
    if sorted(cells) != list(range(len(cells))):
        raise MalformedPayload("hologram labels must be 0..n-1")
    try:
        return HologramLayout(tuple(cells[i] for i in range(len(cells))), depth)
    except ValueError as exc:
        raise MalformedPayload(str(exc)) from None


def decode_message(frame: bytes) -> Message:
    if len(frame) < 4:
        raise TruncatedFrame(f"frame of {len(frame)} bytes is shorter than the magic")
    if frame[:4] != MAGIC:
        raise BadMagic(f"bad magic {frame[:4]!r}")
    if len(frame) < HEADER.size:
        raise TruncatedFrame("frame shorter than its header")
    _, version, kind, length = HEADER.unpack_from(frame)
    if version != VERSION:
        raise UnsupportedVersion(f"unsupported frame version {version}")
    if length > MAX_PAYLOAD:
        raise LengthOverflow(f"declared payload length {length} exceeds {MAX_PAYLOAD}")
    body = frame[HEADER.size:]
    if len(body) < length:
        raise TruncatedFrame(f"payload has {len(body)} of {length} declared bytes")
    if len(body) > length:
        raise LengthOverflow(f"{len(body) - length} bytes beyond the declared payload length")

    r = _Reader(bytes(body))
    if kind == JoinRequest.KIND:
        m: Message = JoinRequest(*r.take(">I"))
    elif kind == JoinAck.KIND:
        m = JoinAck(*r.take(">II"))
    elif kind == LayoutMessage.KIND:
        m = LayoutMessage(_decode_layout(r))
    elif kind == SessionRandMessage.KIND:
        m = SessionRandMessage(SessionRandomness(*r.take(">Q")))
    elif kind == ConfirmationMessage.KIND:
        (client_id,) = r.take(">I")
        m = ConfirmationMessage(Confirmation(client_id, r.blob(), r.blob()))
    elif kind == ResultMessage.KIND:
        success, cause = r.take(">BB")
        if success > 1:
            raise MalformedPayload(f"result flag must be 0 or 1, got {success}")
        try:
            m = ResultMessage(bool(success), FailureCause(cause))
        except ValueError:
            raise MalformedPayload(f"unknown failure cause {cause}") from None
    else:
        raise UnknownKind(f"unknown message kind {kind}")
    r.done()
    return m
