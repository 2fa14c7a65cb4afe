"""Entropy of the shared-secret space and Monte Carlo pairing/attack experiments."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import numpy as np

from . import adversary
from .adversary import AttackerKnowledge
from .gaze import GazeSensorModel, SharedSecret, expected_secret
from .geometry import GridConfig, generate_layout
from .keys import KDF_ITERATIONS
from .protocol import HostState, Ksc, generate_ksc
from .session import ReplayError, SessionParams, SessionResult, replay_log, run_session, sub_seed
from .transport import NetworkTap, OobTap, SimNetConfig

# -- closed-form entropy -----------------------------------------------------


def falling_factorial(n: int, k: int) -> int:
    """n * (n-1) * ... * (n-k+1), computed iteratively."""
    out = 1
    for i in range(k):
        out *= n - i
    return out


def log2_falling_factorial(n: int, k: int) -> float:
    return sum(math.log2(n - i) for i in range(k))


@dataclass(frozen=True)
class EntropyReport:
    n_k: int
    n_p: int
    e_bits: float
    ksc_bits: float
    placement_bits: float

    @property
    def s(self) -> int:
        return self.n_k * self.n_p

    @property
    def reported_bits(self) -> float:
        """Entropy at the 0.1-bit reporting precision."""
        return round(self.e_bits, 1)


def compute_entropy(config: GridConfig, ksc_length: int) -> EntropyReport:
    """Secret-space size for one session.

    Placements: ordered choice of ``K`` distinct non-origin cells on one of the
    depth planes.  Cues: ordered choice of ``P`` distinct labels out of ``K``.
    """
    k = config.hologram_count
    cells = config.x_count * config.y_count - 1
    if k > cells:
        raise ValueError(f"{k} holograms do not fit in {cells} non-origin cells")
    if not 1 <= ksc_length <= k:
        raise ValueError(f"ksc_length must lie in [1, {k}]")
    n_k = falling_factorial(cells, k) * config.z_count
    n_p = falling_factorial(k, ksc_length)
    placement_bits = log2_falling_factorial(cells, k) + math.log2(config.z_count)
    ksc_bits = log2_falling_factorial(k, ksc_length)
    return EntropyReport(n_k, n_p, placement_bits + ksc_bits, ksc_bits, placement_bits)


@dataclass(frozen=True)
class TradeoffRow:
    ksc_length: int
    e_bits: float
    ksc_bits: float


def ksc_tradeoff_table(config: GridConfig, p_range: Iterable[int]) -> list[TradeoffRow]:
    rows = []
    for p in p_range:
        if not 1 <= p <= 10:
            raise ValueError("KSC lengths must lie in [1, 10]")
        r = compute_entropy(config, p)
        rows.append(TradeoffRow(p, r.e_bits, r.ksc_bits))
    return rows


# -- experiments -------------------------------------------------------------

FAILURE_CAUSES = ("none", "missed_capture", "secret_mismatch", "timeout")
CSV_FIELDS = ("trial_id", "participants", "ksc_length", "success", "failure_cause",
              "messages_sent", "attack_success", "seed")
# Network single-guess trials share one captured session per this many guesses.
GUESSES_PER_SESSION = 7_200


@dataclass(frozen=True)
class ExperimentConfig:
    trials: int = 100
    participants: int = 2
    grid_config: GridConfig = field(default_factory=GridConfig)
    ksc_length: int = 3
    sensor: GazeSensorModel = field(default_factory=GazeSensorModel)
    transport: str = "sim"
    netcfg: SimNetConfig = field(default_factory=SimNetConfig)
    # None, "network" or "colocated".
    attacker: Optional[str] = None
    # "single" or "bruteforce" (network posture only).
    attack_mode: str = "single"
    guesses_per_session: int = 1
    seed: int = 0
    kdf_iterations: int = KDF_ITERATIONS
    attacker_kdf_iterations: Optional[int] = None
    host_gazes: bool = True
    record_logs: bool = False

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.participants < 2:
            raise ValueError("participants must be >= 2")
        if self.attacker not in (None, "network", "colocated"):
            raise ValueError(f"unknown attacker posture {self.attacker!r}")
        if self.attack_mode not in ("single", "bruteforce"):
            raise ValueError(f"unknown attack mode {self.attack_mode!r}")
        if self.attacker == "colocated" and self.attack_mode == "bruteforce":
            raise ValueError("brute force needs the network posture: without the "
                             "session randomness a candidate key cannot be checked")
        if self.guesses_per_session < 1:
            raise ValueError("guesses_per_session must be >= 1")
        if self.transport == "loopback" and self.attacker == "network":
            raise ValueError("the loopback transport has no network tap")


@dataclass
class TrialRecord:
    trial_id: int
    participants: int
    ksc_length: int
    success: bool
    failure_cause: str
    messages_sent: int
    attack_success: Optional[int]
    seed: int
    attack_guesses: int = 0
    keys_match: bool = False
    log: list[str] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "participants": self.participants,
            "ksc_length": self.ksc_length,
            "success": int(self.success),
            "failure_cause": self.failure_cause,
            "messages_sent": self.messages_sent,
            "attack_success": "" if self.attack_success is None else self.attack_success,
            "seed": self.seed,
        }


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list[TrialRecord] = field(default_factory=list)
    message_counts: Counter = field(default_factory=Counter)
    attack_guesses: int = 0
    attack_successes: int = 0
    sessions: Optional[list[SessionResult]] = field(default=None, repr=False)

    @property
    def trials(self) -> int:
        return len(self.records)

    @property
    def successes(self) -> int:
        return sum(r.success for r in self.records)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.records else 0.0

    @property
    def failure_causes(self) -> Counter:
        return Counter(r.failure_cause for r in self.records if not r.success)

    @property
    def attack_success_rate(self) -> Optional[float]:
        """Per guess for single-guess attacks, per attacked session for brute force."""
        if self.config.attacker is None or not self.attack_guesses:
            return None
        if self.config.attack_mode == "bruteforce":
            attacked = sum(1 for r in self.records if r.attack_success is not None)
            return self.attack_successes / attacked
        return self.attack_successes / self.attack_guesses

    @property
    def mean_guesses(self) -> Optional[float]:
        n = sum(1 for r in self.records if r.attack_success is not None)
        return self.attack_guesses / n if n else None


def trial_seed(seed: int, trial_id: int) -> int:
    return sub_seed(seed, f"trial/{trial_id}")


def _session_params(cfg: ExperimentConfig, seed: int) -> SessionParams:
    return SessionParams(
        participants=cfg.participants,
        grid=cfg.grid_config,
        ksc_length=cfg.ksc_length,
        sensor=cfg.sensor,
        seed=seed,
        host_gazes=cfg.host_gazes,
        kdf_iterations=cfg.kdf_iterations,
    )


def _netcfg(cfg: ExperimentConfig) -> tuple[SimNetConfig, Optional[NetworkTap], Optional[OobTap]]:
    base = cfg.netcfg
    net_tap = NetworkTap() if cfg.attacker == "network" else None
    oob_tap = OobTap() if cfg.attacker == "colocated" else None
    return (
        SimNetConfig(
            drop_prob=base.drop_prob,
            reorder_prob=base.reorder_prob,
            latency_ticks=base.latency_ticks,
            network_tap=net_tap,
            oob_tap=oob_tap,
            tick_seconds=base.tick_seconds,
            reorder_hold_ticks=base.reorder_hold_ticks,
        ),
        net_tap,
        oob_tap,
    )


def _attack(cfg: ExperimentConfig, host: HostState, frames: list[bytes],
            heard: list[Ksc], seed: int) -> tuple[Optional[int], int]:
    """Run the configured attack on one session: (successes, guesses)."""
    rng = random.Random(sub_seed(seed, "attacker"))
    iterations = cfg.attacker_kdf_iterations or cfg.kdf_iterations
    common = dict(grid_config=cfg.grid_config, ksc_length=cfg.ksc_length, kdf_iterations=iterations)
    if cfg.attacker == "network":
        k = AttackerKnowledge.from_tap(frames, **common)
        try:
            k.intercepted()
        except adversary.IncompleteKnowledge:
            return None, 0
        if cfg.attack_mode == "bruteforce":
            out = adversary.bruteforce_ksc(k)
            return int(out.succeeded), out.guesses_made
        wins = sum(adversary.guess_ksc_once(k, rng).succeeded for _ in range(cfg.guesses_per_session))
        return wins, cfg.guesses_per_session
    if cfg.attacker == "colocated":
        if not heard or host.layout is None:
            return None, 0
        k = AttackerKnowledge.from_overheard(heard[0], **common)
        judge = referee_for(host)
        wins = sum(adversary.guess_layout_once(k, rng, judge).succeeded
                   for _ in range(cfg.guesses_per_session))
        return wins, cfg.guesses_per_session
    return None, 0


def referee_for(host: HostState) -> Callable[[SharedSecret], bool]:
    """Judge for colocated guesses: compares against the host's true cued cells."""
    truth = expected_secret(host.ksc, host.layout, host.config.grid).value
    return lambda candidate: candidate.value == truth


def _trial_header(cfg: ExperimentConfig, trial_id: int, seed: int) -> dict:
    return {
        "type": "trial", "trial_id": trial_id, "seed": seed,
        "participants": cfg.participants, "ksc_length": cfg.ksc_length,
        "attacker": cfg.attacker, "attack_mode": cfg.attack_mode,
        "guesses_per_session": cfg.guesses_per_session,
        "kdf_iterations": cfg.kdf_iterations,
        "attacker_kdf_iterations": cfg.attacker_kdf_iterations,
        "grid": dataclasses.asdict(cfg.grid_config),
    }


def run_trial(cfg: ExperimentConfig, trial_id: int) -> tuple[TrialRecord, SessionResult]:
    seed = trial_seed(cfg.seed, trial_id)
    netcfg, net_tap, oob_tap = _netcfg(cfg)
    result = run_session(_session_params(cfg, seed), transport=cfg.transport,
                         netcfg=netcfg, record=cfg.record_logs)
    frames = [dg.payload for dg in net_tap.frames] if net_tap is not None else []
    heard = [u.ksc for u in oob_tap.utterances] if oob_tap is not None else []
    wins, guesses = _attack(cfg, result.host, frames, heard, seed)
    log = []
    if cfg.record_logs:
        log = [json.dumps(_trial_header(cfg, trial_id, seed), sort_keys=True), *result.log_lines()]
    record = TrialRecord(
        trial_id=trial_id,
        participants=cfg.participants,
        ksc_length=cfg.ksc_length,
        success=result.success,
        failure_cause=result.failure_cause.label,
        messages_sent=result.messages_sent,
        attack_success=wins,
        seed=seed,
        attack_guesses=guesses,
        keys_match=result.keys_match,
        log=log,
    )
    return record, result


def replay_trial(lines: Iterable[str]) -> TrialRecord:
    """Rebuild a trial's CSV record from its recorded event log."""
    lines = list(lines)
    replay = replay_log(lines)
    headers = [m for m in replay.meta if m["type"] == "trial"]
    if len(headers) != 1:
        raise ReplayError(0, "log must carry exactly one trial header")
    h = headers[0]
    cfg = ExperimentConfig(
        trials=1, participants=h["participants"], ksc_length=h["ksc_length"],
        grid_config=GridConfig(**h["grid"]), attacker=h["attacker"], attack_mode=h["attack_mode"],
        guesses_per_session=h["guesses_per_session"], kdf_iterations=h["kdf_iterations"],
        attacker_kdf_iterations=h["attacker_kdf_iterations"],
    )
    heard = replay.spoken if cfg.attacker == "colocated" else []
    frames = replay.delivered if cfg.attacker == "network" else []
    wins, guesses = _attack(cfg, replay.host, frames, heard, h["seed"])
    keys = [p.key for p in (replay.host, *replay.clients.values())]
    return TrialRecord(
        trial_id=h["trial_id"],
        participants=h["participants"],
        ksc_length=h["ksc_length"],
        success=replay.success,
        failure_cause=replay.failure_cause.label,
        messages_sent=len(replay.sends),
        attack_success=wins,
        seed=h["seed"],
        attack_guesses=guesses,
        keys_match=all(k is not None for k in keys) and len({k.raw for k in keys}) == 1,
        log=lines,
    )


def run_experiment(cfg: ExperimentConfig, keep_sessions: bool = False) -> ExperimentReport:
    report = ExperimentReport(cfg)
    if keep_sessions:
        report.sessions = []
    for trial_id in range(cfg.trials):
        record, result = run_trial(cfg, trial_id)
        report.records.append(record)
        report.message_counts.update(result.message_counts)
        if record.attack_success is not None:
            report.attack_successes += record.attack_success
            report.attack_guesses += record.attack_guesses
        if keep_sessions:
            report.sessions.append(result)
    return report


def colocated_guess_rate(trials: int, config: GridConfig = GridConfig(), ksc_length: int = 3,
                         seed: int = 0, sessions: int = 100) -> tuple[int, int]:
    """Vectorized colocated single-guess trials: (successes, trials).

    Each of ``sessions`` true placements (drawn like a real layout) faces an
    equal share of independent guesses; comparison happens on cell indices,
    which is equivalent to comparing rendered secrets because rendering is
    injective on in-grid cells.
    """
    rng = np.random.default_rng(seed)
    py_rng = random.Random(seed)
    positions = config.plane_positions()
    wins = 0
    per = -(-trials // sessions)
    done = 0
    for _ in range(sessions):
        n = min(per, trials - done)
        if n <= 0:
            break
        layout = generate_layout(config, py_rng)
        ksc = generate_ksc(ksc_length, py_rng, config.hologram_count)
        k = AttackerKnowledge.from_overheard(ksc, grid_config=config, ksc_length=ksc_length)
        guesses = adversary.placement_guess_batch(k, n, rng)
        cued = [layout.cell_of(d) for d in ksc]
        target = np.array([*(positions.index((c.x, c.y)) for c in cued), layout.depth_plane])
        wins += int(np.all(guesses == target, axis=1).sum())
        done += n
    return wins, done


# -- reporting ---------------------------------------------------------------

def export_csv(report: Union[ExperimentReport, Iterable[TrialRecord]], path) -> Path:
    records = report.records if isinstance(report, ExperimentReport) else list(report)
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(records))
    return path


def csv_text(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        if r.failure_cause not in FAILURE_CAUSES:
            raise ValueError(f"failure cause {r.failure_cause!r} outside the CSV schema")
        writer.writerow(r.row())
    return buf.getvalue()


def format_summary(report: ExperimentReport) -> str:
    cfg = report.config
    lines = [
        f"trials: {report.trials}  participants: {cfg.participants}  ksc_length: {cfg.ksc_length}",
        f"success rate: {report.success_rate:.3f}",
    ]
    causes = report.failure_causes
    if causes:
        lines.append("failures: " + ", ".join(f"{c}={n}" for c, n in sorted(causes.items())))
    else:
        lines.append("failures: none")
    lines.append("messages: " + ", ".join(f"{k}={v}" for k, v in sorted(report.message_counts.items())))
    if report.attack_success_rate is not None:
        if cfg.attack_mode == "bruteforce":
            lines.append(f"attack success rate: {report.attack_success_rate:.6g} "
                         f"({report.attack_guesses} derivations in total)")
        else:
            lines.append(f"attack success rate: {report.attack_success_rate:.6g} "
                         f"({report.attack_successes}/{report.attack_guesses})")
    lines.append("(pairing times are human measurements and are not simulated)")
    return "\n".join(lines)
