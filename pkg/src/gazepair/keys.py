"""Session randomness, PBKDF2 key derivation and the encrypt-to-confirm handshake."""

from __future__ import annotations

import enum
import hashlib
import random
import secrets
from dataclasses import dataclass, field
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .gaze import SharedSecret

KDF_ITERATIONS = 50_000
KEY_BYTES = 32
SALT_BYTES = 8
NONCE_BYTES = 12
TAG_BYTES = 16
CHALLENGE = b"GAZEPAIR-CONFIRM-v1"


def _expand(tag: bytes, seed64: int) -> bytes:
    return hashlib.sha256(tag + b"\x00" + seed64.to_bytes(8, "big")).digest()


@dataclass(frozen=True)
class SessionRandomness:
    """Host-published 64-bit seed and the salt and nonce base expanded from it."""

    seed64: int

    def __post_init__(self) -> None:
        if not 0 <= self.seed64 < 1 << 64:
            raise ValueError("seed64 must be an unsigned 64-bit value")

    @property
    def salt(self) -> bytes:
        return _expand(b"salt", self.seed64)[:SALT_BYTES]

    @property
    def iv(self) -> bytes:
        return _expand(b"iv", self.seed64)[:NONCE_BYTES]


def generate_session_randomness(rng: Optional[random.Random] = None) -> SessionRandomness:
    """Draw a fresh session seed.  Without ``rng`` the OS CSPRNG is used."""
    bits = rng.getrandbits(64) if rng is not None else secrets.randbits(64)
    return SessionRandomness(bits)


@dataclass(frozen=True)
class SymmetricKey:
    raw: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.raw) != KEY_BYTES:
            raise ValueError(f"key must be {KEY_BYTES} bytes, got {len(self.raw)}")

    def fingerprint(self) -> str:
        """Short non-secret identifier suitable for logs."""
        return hashlib.sha256(b"fp" + self.raw).hexdigest()[:16]


def derive_key(secret: SharedSecret, salt: bytes, iterations: int = KDF_ITERATIONS) -> SymmetricKey:
    if not secret.value:
        raise ValueError("cannot derive a key from an empty secret")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    raw = hashlib.pbkdf2_hmac("sha256", secret.value.encode("utf-8"), salt, iterations, KEY_BYTES)
    return SymmetricKey(raw)


@dataclass(frozen=True)
class Confirmation:
    client_id: int
    ciphertext: bytes
    auth_tag: bytes


class Verdict(enum.Enum):
    OK = "ok"
    AUTH_FAILURE = "auth_failure"
    PLAINTEXT_MISMATCH = "plaintext_mismatch"

    def __bool__(self) -> bool:
        return self is Verdict.OK


def challenge_for(client_id: int) -> bytes:
    return CHALLENGE + client_id.to_bytes(4, "big")


def confirmation_nonce(randomness: SessionRandomness, client_id: int) -> bytes:
    """Session IV with the 4-byte client id XORed into its low-order bytes."""
    if not 0 <= client_id < 1 << 32:
        raise ValueError("client_id must fit in 32 bits")
    iv = int.from_bytes(randomness.iv, "big")
    return (iv ^ client_id).to_bytes(NONCE_BYTES, "big")


def make_confirmation(key: SymmetricKey, randomness: SessionRandomness, client_id: int) -> Confirmation:
    sealed = AESGCM(key.raw).encrypt(
        confirmation_nonce(randomness, client_id), challenge_for(client_id), None
    )
    return Confirmation(client_id, sealed[:-TAG_BYTES], sealed[-TAG_BYTES:])


def verify_confirmation(key: SymmetricKey, randomness: SessionRandomness, conf: Confirmation) -> Verdict:
    try:
        plain = AESGCM(key.raw).decrypt(
            confirmation_nonce(randomness, conf.client_id), conf.ciphertext + conf.auth_tag, None
        )
    except InvalidTag:
        return Verdict.AUTH_FAILURE
    if plain != challenge_for(conf.client_id):
        return Verdict.PLAINTEXT_MISMATCH
    return Verdict.OK
