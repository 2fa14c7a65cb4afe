"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict; the terminal summary lists them as
``criterion N: PASS|FAIL  detail``.  Heavy workloads are module-scoped
fixtures so the secrecy scan (criterion 9) reuses the traffic of 3 to 6.
"""

import math
import random
from dataclasses import dataclass, field

import pytest

from gazepair import adversary
from gazepair.adversary import AttackerKnowledge, bruteforce_ksc, guess_layout_once
from gazepair.analysis import (
    ExperimentConfig,
    compute_entropy,
    csv_text,
    referee_for,
    replay_trial,
    run_experiment,
    run_trial,
)
from gazepair.gaze import (
    GazeSensorModel,
    MissedCapture,
    SharedSecret,
    build_shared_secret,
    expected_secret,
)
from gazepair.geometry import GridConfig, Point3, discretize
from gazepair.keys import KDF_ITERATIONS, SessionRandomness, derive_key, verify_confirmation
from gazepair.protocol import Ksc, decode_message, encode_message
from gazepair.protocol.messages import (
    ConfirmationMessage,
    JoinAck,
    JoinRequest,
    SessionRandMessage,
)
from gazepair.session import SessionParams, replay_log, run_session
from gazepair.transport import NetworkTap, SimNetConfig
from fuzz import random_message
from oracles import binomial_band, pbkdf2_sha256

GRID = GridConfig()
BULK = 1_000   # test-profile iterations for bulk pairing sessions
STATS = 16     # iterations where only guess statistics matter


def report(record_property, n, ok, detail):
    record_property("criterion", n)
    record_property("detail", detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


# -- secrecy scanning --------------------------------------------------------

def _masked(frame: bytes) -> bytes:
    """Frame with its uniformly random fields zeroed (nonces, seed, ciphertext, tag)."""
    m = decode_message(frame)
    if isinstance(m, JoinRequest):
        m = JoinRequest(0)
    elif isinstance(m, JoinAck):
        m = JoinAck(0, m.client_id)
    elif isinstance(m, SessionRandMessage):
        m = SessionRandMessage(SessionRandomness(0))
    elif isinstance(m, ConfirmationMessage):
        c = m.confirmation
        m = ConfirmationMessage(type(c)(c.client_id, bytes(len(c.ciphertext)), bytes(len(c.auth_tag))))
    return encode_message(m)


def _captured_secret(state):
    """Recompute the secret a party typed, from its own seed (tests only)."""
    cfg = state.config
    if state.ksc is None or state.layout is None:
        return None
    try:
        return build_shared_secret(state.ksc, state.layout, cfg.sensor, cfg.grid,
                                   random.Random(f"{cfg.seed}/gaze")).value
    except MissedCapture:
        return None


@dataclass
class SecrecyScan:
    sessions: int = 0
    frames: int = 0
    utterances: int = 0
    violations: list = field(default_factory=list)

    def add(self, result, frames=None):
        self.sessions += 1
        parties = [result.host, *result.clients.values()]
        secrets = {s for s in (_captured_secret(p) for p in parties) if s}
        h = result.host
        if h.ksc is not None and h.layout is not None:
            secrets.add(expected_secret(h.ksc, h.layout, h.config.grid).value)
        keys = {p.key.raw for p in parties if p.key is not None}
        cue = str(h.ksc).encode() if h.ksc is not None else None
        frames = [d.payload for d in result.traffic] if frames is None else frames
        for raw in frames:
            self.frames += 1
            for s in secrets:
                if s.encode() in raw:
                    self.violations.append(("secret", s))
            for k in keys:
                if k in raw:
                    self.violations.append(("key", k.hex()))
            if cue is not None and cue in _masked(raw):
                self.violations.append(("ksc", cue))
        for u in result.utterances:
            self.utterances += 1
            if not isinstance(u.ksc, Ksc) or u.ksc != h.ksc:
                self.violations.append(("oob", u))

    @property
    def clean(self):
        return self.sessions > 0 and self.frames > 0 and not self.violations


# -- workloads ---------------------------------------------------------------

@pytest.fixture(scope="module")
def happy_path():
    scan = SecrecyScan()
    outcomes = {}
    for participants in (2, 3):
        for transport in ("sim", "loopback"):
            good = 0
            for seed in range(1_000):
                r = run_session(SessionParams(participants=participants, seed=seed,
                                              kdf_iterations=BULK), transport)
                scan.add(r)
                paired = r.host.phase.value == "Paired" and all(
                    c.phase.value == "Paired" for c in r.clients.values())
                good += paired and r.keys_match
            outcomes[(participants, transport)] = good
    full = 0
    for seed in range(10):
        participants, transport = (2, 3)[seed % 2], ("sim", "loopback")[seed // 5]
        r = run_session(SessionParams(participants=participants, seed=10_000 + seed,
                                      kdf_iterations=KDF_ITERATIONS), transport)
        scan.add(r)
        full += r.success and r.keys_match and r.host.config.kdf_iterations == 50_000
    return outcomes, full, scan


@pytest.fixture(scope="module")
def misselection():
    scan = SecrecyScan()
    q, n = 0.005, 100_000
    cfg = ExperimentConfig(trials=n, sensor=GazeSensorModel(misselect_prob=q),
                           kdf_iterations=STATS, seed=4)
    successes = 0
    causes = set()
    for i in range(n):
        record, result = run_trial(cfg, i)
        successes += record.success
        if not record.success:
            causes.add(record.failure_cause)
        scan.add(result)
    q_cal, n_cal = 0.0028, 20_000
    cal = run_experiment(ExperimentConfig(trials=n_cal, sensor=GazeSensorModel(misselect_prob=q_cal),
                                          kdf_iterations=STATS, seed=5))
    return (q, n, successes, causes), (q_cal, n_cal, cal.successes), scan


@pytest.fixture(scope="module")
def network_attacks():
    scan = SecrecyScan()
    single = run_experiment(ExperimentConfig(trials=100, attacker="network", attack_mode="single",
                                             guesses_per_session=7_200, kdf_iterations=STATS,
                                             seed=6), keep_sessions=True)
    for r in single.sessions:
        scan.add(r)
    brute = []
    for seed in range(2_000):
        tap = NetworkTap()
        r = run_session(SessionParams(seed=20_000 + seed, kdf_iterations=STATS),
                        netcfg=SimNetConfig(network_tap=tap))
        frames = [d.payload for d in tap.frames]
        scan.add(r, frames)
        out = bruteforce_ksc(AttackerKnowledge.from_tap(frames, kdf_iterations=STATS))
        brute.append((out.succeeded and out.recovered_key == r.host.key, out.guesses_made))
    return single, brute, scan


@pytest.fixture(scope="module")
def colocated_attacks():
    scan = SecrecyScan()
    report_ = run_experiment(ExperimentConfig(trials=300, attacker="colocated",
                                              guesses_per_session=10_000, kdf_iterations=STATS,
                                              seed=7), keep_sessions=True)
    rng = random.Random(8)
    correct_guess_keys = 0
    salt_guess_keys = 0
    for r in report_.sessions:
        scan.add(r)
        k = AttackerKnowledge.from_overheard(r.utterances[0].ksc, kdf_iterations=STATS)
        truth = tuple(r.host.layout.cell_of(d) for d in k.heard_ksc)
        out = guess_layout_once(k, rng, referee_for(r.host), guess=truth)
        assert out.succeeded
        correct_guess_keys += out.recovered_key is not None
        # With the secret in hand the salt is still missing: try guessed seeds
        # against a real confirmation captured (test-side only) from the session.
        secret = expected_secret(k.heard_ksc, r.host.layout, GRID)
        conf = next(decode_message(d.payload).confirmation for d in r.traffic
                    if isinstance(decode_message(d.payload), ConfirmationMessage))
        for _ in range(10):
            guess = SessionRandomness(rng.getrandbits(64))
            salt_guess_keys += bool(verify_confirmation(
                derive_key(secret, guess.salt, STATS), guess, conf))
    return report_, correct_guess_keys, salt_guess_keys, scan


# -- criteria ----------------------------------------------------------------

def test_criterion_1_entropy(record_property):
    e3 = compute_entropy(GRID, 3)
    e10 = compute_entropy(GRID, 10)
    # Counting all 42 plane cells, as the reference guess space does.
    e10_42 = e10.e_bits + math.log2(42 / 32)
    checks = {
        "n_k": abs(e3.n_k / 2.034e16 - 1) <= 1e-3,
        "n_p": e3.n_p == 720,
        "e3": 63.5 <= e3.e_bits <= 64.0,
        "e10": 76.0 <= e10.e_bits <= 76.6,
    }
    ok = all(checks.values())
    detail = (f"N_K={e3.n_k:.4e} N_P={e3.n_p} E(P=3)={e3.e_bits:.3f} "
              f"E(P=10)={e10.e_bits:.3f} (window 76.0-76.6; origin-including count gives "
              f"{e10_42:.3f}) failed={[k for k, v in checks.items() if not v]}")
    report(record_property, 1, ok, detail)
    assert ok, detail


def test_criterion_2_discretization(record_property):
    a = discretize(Point3(-2.2, 1.8, 1.1), GRID)
    b = discretize(Point3(-1.770, 2.398, 1.678), GRID)
    ok = a == "-221" and b == "-222"
    report(record_property, 2, ok, f"{a!r} {b!r}")
    assert ok


def test_criterion_3_happy_path(record_property, happy_path):
    outcomes, full, _ = happy_path
    ok = all(v == 1_000 for v in outcomes.values()) and full == 10
    detail = ", ".join(f"{p}p/{t}: {v}/1000" for (p, t), v in outcomes.items())
    detail += f"; full-count sessions: {full}/10"
    report(record_property, 3, ok, detail)
    assert ok, detail


def test_criterion_4_misselection(record_property, misselection):
    (q, n, wins, causes), (q_cal, n_cal, cal_wins), _ = misselection
    p = (1 - q) ** 6
    lo, hi = binomial_band(n, p)
    p_cal = (1 - q_cal) ** 6
    lo_cal, hi_cal = binomial_band(n_cal, p_cal)
    ok = lo <= wins <= hi and causes <= {"secret_mismatch"} and lo_cal <= cal_wins <= hi_cal
    detail = (f"q={q}: {wins}/{n}={wins / n:.5f} vs {p:.5f} band [{lo / n:.5f}, {hi / n:.5f}]; "
              f"q={q_cal}: {cal_wins / n_cal:.4f} vs {p_cal:.4f} (reference 0.983)")
    report(record_property, 4, ok, detail)
    assert ok, detail


def test_criterion_5_network_attacker(record_property, network_attacks):
    single, brute, _ = network_attacks
    n = single.attack_guesses
    lo, hi = binomial_band(n, 1 / 720)
    wins = single.attack_successes
    recovered = all(ok for ok, _ in brute)
    counts = [g for _, g in brute]
    mean = sum(counts) / len(counts)
    ok = (n >= 720_000 and lo <= wins <= hi and recovered and max(counts) <= 720
          and abs(mean - 360.5) <= 0.05 * 360.5)
    detail = (f"single: {wins}/{n}={wins / n:.6f} vs 1/720={1 / 720:.6f} band [{lo:.0f}, {hi:.0f}]; "
              f"bruteforce: {sum(o for o, _ in brute)}/{len(brute)} keys, max {max(counts)}, "
              f"mean {mean:.1f} vs 360.5")
    report(record_property, 5, ok, detail)
    assert ok, detail


def test_criterion_6_colocated_attacker(record_property, colocated_attacks):
    rep, correct_keys, salt_keys, _ = colocated_attacks
    space = adversary.colocated_guess_space(GRID, 3)
    n, wins = rep.attack_guesses, rep.attack_successes
    lo, hi = binomial_band(n, 1 / space)
    ok = n >= 3_000_000 and lo <= wins <= hi and correct_keys == 0 and salt_keys == 0
    detail = (f"{wins}/{n} vs 1/{space} (band {max(lo, 0):.1f}-{hi:.1f}); origin-inclusive reference "
              f"1/{adversary.REFERENCE_COLOCATED_GUESS_SPACE}; keys from correct guesses: "
              f"{correct_keys}, verifying keys from guessed salts: {salt_keys}/3000")
    report(record_property, 6, ok, detail)
    assert ok, detail


VECTORS = [
    ("-221031311", bytes(range(8))),
    ("-222", b"saltsalt"),
    ("password", b"salt"),
    ("-3510413401", bytes(8)),
    ("é-151", b"\xff" * 8),
]


def test_criterion_7_kdf_conformance(record_property):
    matches = 0
    for secret, salt in VECTORS:
        ours = derive_key(SharedSecret(secret), salt).raw
        oracle = pbkdf2_sha256(secret.encode("utf-8"), salt, 50_000, 32)
        matches += ours == oracle
    ok = matches == len(VECTORS) and KDF_ITERATIONS == 50_000
    report(record_property, 7, ok, f"{matches}/{len(VECTORS)} vectors at 50,000 iterations")
    assert ok


def test_criterion_8_codec_and_replay(record_property):
    rng = random.Random(9)
    exact = 0
    for _ in range(10_000):
        m = random_message(rng)
        frame = encode_message(m)
        back = decode_message(frame)
        exact += back == m and encode_message(back) == frame
    cfg = ExperimentConfig(trials=30, participants=3, kdf_iterations=BULK, seed=10,
                           sensor=GazeSensorModel(misselect_prob=0.05), attacker="network",
                           guesses_per_session=50, record_logs=True,
                           netcfg=SimNetConfig(drop_prob=0.02, reorder_prob=0.2))
    rep = run_experiment(cfg, keep_sessions=True)
    same_states = 0
    for record, result in zip(rep.records, rep.sessions):
        rp = replay_log(record.log)
        live = [(p.phase, p.cause, p.key) for p in (result.host, *result.clients.values())]
        again = [(p.phase, p.cause, p.key) for p in (rp.host, *rp.clients.values())]
        same_states += live == again and rp.traffic_matches
    original = csv_text(rep.records).encode()
    replayed = csv_text([replay_trial(r.log) for r in rep.records]).encode()
    ok = exact == 10_000 and same_states == cfg.trials and original == replayed
    detail = (f"fuzz {exact}/10000; replayed states {same_states}/{cfg.trials}; "
              f"CSV bytes identical: {original == replayed} "
              f"({rep.trials - rep.successes} failed trials included)")
    report(record_property, 8, ok, detail)
    assert ok, detail


def test_criterion_9_secrecy(record_property, happy_path, misselection, network_attacks,
                             colocated_attacks):
    scans = {"c3": happy_path[-1], "c4": misselection[-1], "c5": network_attacks[-1],
             "c6": colocated_attacks[-1]}
    ok = all(s.clean for s in scans.values())
    detail = "; ".join(f"{k}: {s.sessions} sessions, {s.frames} frames, {s.utterances} utterances, "
                       f"{len(s.violations)} findings" for k, s in scans.items())
    report(record_property, 9, ok, detail)
    assert ok, detail
