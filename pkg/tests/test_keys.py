import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazepair.gaze import SharedSecret
from gazepair.keys import (
    CHALLENGE,
    KDF_ITERATIONS,
    Confirmation,
    SessionRandomness,
    SymmetricKey,
    Verdict,
    challenge_for,
    confirmation_nonce,
    derive_key,
    generate_session_randomness,
    make_confirmation,
    verify_confirmation,
)
from oracles import pbkdf2_sha256

FAST = 1_000

# (password, salt, expected key hex) at 50,000 iterations.  The expected keys
# were produced by the pure-Python oracle and agree with an independent
# PBKDF2 implementation.
FROZEN_VECTORS = [
    (b"-221031311", bytes(range(8)),
     "00a5af5edfc3613280d8b2a3692c40200a96514d379c588957dd7bd1a79bcc85"),
    (b"-222", b"saltsalt",
     "a84e37ee1a0f5604d40cf3c687ff3080439719f77387826bfff717d55c3bfa02"),
    (b"password", b"salt",
     "ae409ce6f5eaac4f71e42819b480ebb0547d678d2859622f3b1ede4bc67a2a23"),
    (b"-3510413401", bytes(8),
     "fb3beb41eed2dd50807fade6074832fc3475ef0eab0592155c060bcaac51e2e2"),
    ("é-151".encode(), b"\xff" * 8,
     "c632cb2e21ef627b2d795c8b103bb687e3cc4ffebb84478fafd6ec7e1dce6d15"),
]


def test_oracle_matches_published_pbkdf2_vectors():
    assert pbkdf2_sha256(b"password", b"salt", 1, 32).hex().startswith("120fb6cf")
    assert pbkdf2_sha256(b"password", b"salt", 2, 32).hex().startswith("ae4d0c95")
    assert pbkdf2_sha256(b"passwd", b"salt", 1, 64).hex().endswith("d3a19783")


def test_default_kdf_parameters():
    assert KDF_ITERATIONS == 50_000
    key = derive_key(SharedSecret("-221"), b"12345678")
    assert len(key.raw) == 32


@pytest.mark.parametrize("password, salt, expected", FROZEN_VECTORS)
def test_frozen_kdf_vectors(password, salt, expected):
    key = derive_key(SharedSecret(password.decode("utf-8")), salt)
    assert key.raw.hex() == expected


@settings(max_examples=25, deadline=None)
@given(secret=st.text(min_size=1, max_size=16), salt=st.binary(min_size=8, max_size=8))
def test_kdf_agrees_with_oracle(secret, salt):
    key = derive_key(SharedSecret(secret), salt, iterations=20)
    assert key.raw == pbkdf2_sha256(secret.encode("utf-8"), salt, 20, 32)


def test_kdf_is_deterministic():
    a = derive_key(SharedSecret("-221031311"), b"abcdefgh", FAST)
    b = derive_key(SharedSecret("-221031311"), b"abcdefgh", FAST)
    assert a == b


def test_single_character_change_flips_about_half_the_bits():
    rng = random.Random(0)
    alphabet = "-0123456789"
    total = 0
    n = 1_000
    for _ in range(n):
        s = "".join(rng.choice(alphabet) for _ in range(9))
        i = rng.randrange(len(s))
        t = s[:i] + rng.choice(alphabet.replace(s[i], "")) + s[i + 1:]
        a = derive_key(SharedSecret(s), b"saltsalt", 10).raw
        b = derive_key(SharedSecret(t), b"saltsalt", 10).raw
        flipped = bin(int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).count("1")
        assert 64 < flipped < 192
        total += flipped
    assert abs(total / n - 128) < 2


def test_session_seeds_differ():
    rng = random.Random(1)
    seeds = [generate_session_randomness(rng).seed64 for _ in range(10_000)]
    assert len(set(seeds)) == len(seeds)
    os_seeds = {generate_session_randomness().seed64 for _ in range(1_000)}
    assert len(os_seeds) == 1_000


def test_salt_and_iv_are_independent_expansions():
    r = SessionRandomness(0x0123456789ABCDEF)
    assert len(r.salt) == 8 and len(r.iv) == 12
    assert r.salt != r.iv[:8]
    assert SessionRandomness(1).salt != SessionRandomness(2).salt
    with pytest.raises(ValueError):
        SessionRandomness(1 << 64)


def test_key_repr_hides_material():
    key = derive_key(SharedSecret("-221"), b"saltsalt", 1)
    assert key.raw.hex() not in repr(key)
    assert len(key.fingerprint()) == 16
    with pytest.raises(ValueError):
        SymmetricKey(b"short")


@pytest.mark.parametrize("iterations", [0, -5])
def test_kdf_rejects_bad_iterations(iterations):
    with pytest.raises(ValueError):
        derive_key(SharedSecret("-221"), b"saltsalt", iterations)


def test_confirmation_round_trip():
    r = SessionRandomness(99)
    key = derive_key(SharedSecret("-221031311"), r.salt, FAST)
    conf = make_confirmation(key, r, 7)
    assert conf.client_id == 7
    assert len(conf.auth_tag) == 16
    assert len(conf.ciphertext) == len(CHALLENGE) + 4
    assert verify_confirmation(key, r, conf) is Verdict.OK


def test_mismatched_secrets_never_verify():
    rng = random.Random(2)
    for i in range(1_000):
        r = generate_session_randomness(rng)
        a = SharedSecret(f"-2{rng.randrange(10)}1031311")
        b = SharedSecret(a.value + "1")
        conf = make_confirmation(derive_key(a, r.salt, 1), r, i)
        assert verify_confirmation(derive_key(b, r.salt, 1), r, conf) is Verdict.AUTH_FAILURE


def test_tampering_any_byte_is_detected():
    r = SessionRandomness(5)
    key = derive_key(SharedSecret("-221"), r.salt, 1)
    conf = make_confirmation(key, r, 3)
    blob = conf.ciphertext + conf.auth_tag
    for i in range(len(blob)):
        bad = bytearray(blob)
        bad[i] ^= 0x01
        n = len(conf.ciphertext)
        forged = Confirmation(3, bytes(bad[:n]), bytes(bad[n:]))
        assert verify_confirmation(key, r, forged) is Verdict.AUTH_FAILURE
    assert verify_confirmation(key, r, Confirmation(4, conf.ciphertext, conf.auth_tag)) is Verdict.AUTH_FAILURE


def test_wrong_plaintext_is_reported_separately():
    from cryptography.hazmat.primitives.ciphers.aead import AESGCM

    r = SessionRandomness(6)
    key = derive_key(SharedSecret("-221"), r.salt, 1)
    sealed = AESGCM(key.raw).encrypt(confirmation_nonce(r, 2), b"something else!", None)
    conf = Confirmation(2, sealed[:-16], sealed[-16:])
    verdict = verify_confirmation(key, r, conf)
    assert verdict is Verdict.PLAINTEXT_MISMATCH
    assert not verdict


def test_nonces_are_unique_per_client():
    r = SessionRandomness(7)
    nonces = {confirmation_nonce(r, cid) for cid in range(1_000)}
    assert len(nonces) == 1_000
    assert confirmation_nonce(r, 0) == r.iv
    assert challenge_for(1) == CHALLENGE + b"\x00\x00\x00\x01"
    with pytest.raises(ValueError):
        confirmation_nonce(r, 1 << 32)


def test_keys_match_iff_secrets_match():
    from gazepair.gaze import expected_secret
    from gazepair.geometry import GridConfig, generate_layout

    rng = random.Random(10)
    grid = GridConfig()
    for i in range(10_000):
        layout = generate_layout(grid, rng)
        ksc = rng.sample(range(10), 3)
        other = list(ksc)
        if i % 2:
            other[rng.randrange(3)] = rng.choice([d for d in range(10) if d not in ksc])
        salt = rng.randbytes(8)
        a = derive_key(expected_secret(ksc, layout, grid), salt, 1)
        b = derive_key(expected_secret(other, layout, grid), salt, 1)
        assert (a == b) == (ksc == other)


def test_wrong_cue_order_fails_verification():
    from gazepair.gaze import expected_secret
    from gazepair.geometry import GridConfig, generate_layout

    grid = GridConfig()
    layout = generate_layout(grid, random.Random(3))
    r = SessionRandomness(3)
    host = derive_key(expected_secret([2, 1, 3], layout, grid), r.salt, FAST)
    client = derive_key(expected_secret([1, 2, 3], layout, grid), r.salt, FAST)
    assert verify_confirmation(host, r, make_confirmation(client, r, 1)) is Verdict.AUTH_FAILURE
