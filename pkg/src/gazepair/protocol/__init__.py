"""Pairing protocol: KSC generation, messages, wire codec and state machines."""

from .client import ClientConfig, ClientPhase, ClientState, client_step
from .events import BEGIN, CAPTURE, JOIN, OPEN_LOBBY, Command, OobHeard, Received, Send, Tick
from .host import HostConfig, HostPhase, HostState, host_step
from .ksc import DEFAULT_KSC_LENGTH, Ksc, generate_ksc
from .messages import (
    BadMagic,
    ConfirmationMessage,
    DecodeError,
    FailureCause,
    JoinAck,
    JoinRequest,
    LayoutMessage,
    LengthOverflow,
    MalformedPayload,
    Message,
    ResultMessage,
    SessionRandMessage,
    TruncatedFrame,
    UnknownKind,
    UnsupportedVersion,
    decode_message,
    encode_message,
    kind_name,
)
