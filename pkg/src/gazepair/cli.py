"""Batch command-line driver: ``gazepair {pair,attack,entropy,replay}``."""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import adversary
from .analysis import (
    GUESSES_PER_SESSION,
    ExperimentConfig,
    csv_text,
    export_csv,
    format_summary,
    ksc_tradeoff_table,
    replay_trial,
    run_experiment,
)
from .gaze import GazeSensorModel
from .geometry import GridConfig
from .keys import KDF_ITERATIONS
from .session import ReplayError, parse_log, replay_log


def _default_seed() -> int:
    raw = os.environ.get("GAZEPAIR_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"GAZEPAIR_SEED must be an integer, got {raw!r}")


def _range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}")
    if a > b:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return range(a, b + 1)


def _grid(text: str) -> GridConfig:
    try:
        xt, yt, zt, k = (int(v) for v in text.split(","))
        return GridConfig(x_count=xt, y_count=yt, z_count=zt, hologram_count=k)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}: {exc}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazepair", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--trials", type=int, default=100)
        p.add_argument("--ksc-len", type=int, default=3)
        p.add_argument("--seed", type=int, default=None,
                       help="default: $GAZEPAIR_SEED, else 0")
        p.add_argument("--out", type=Path, default=None, help="write per-trial CSV here")
        p.add_argument("--kdf-iterations", type=int, default=KDF_ITERATIONS)

    p = sub.add_parser("pair", help="run seeded pairing sessions")
    common(p)
    p.add_argument("--participants", type=int, default=2)
    p.add_argument("--noise-deg", type=float, default=1.5)
    p.add_argument("--misselect", type=float, default=0.0)
    p.add_argument("--transport", choices=("sim", "loopback"), default="sim")
    p.add_argument("--log", type=Path, default=None, help="write event logs (JSON lines)")

    p = sub.add_parser("attack", help="run eavesdropper experiments")
    common(p)
    p.add_argument("--posture", choices=("network", "colocated"), required=True)
    p.add_argument("--mode", choices=("single", "bruteforce"), default="single")

    p = sub.add_parser("entropy", help="print the KSC-length/entropy table")
    p.add_argument("--ksc-len-range", type=_range, default=range(3, 11))
    p.add_argument("--grid", type=_grid, default=GridConfig())
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("replay", help="replay a recorded event log")
    p.add_argument("--log", type=Path, required=True)
    return parser


def _validate(args, parser: argparse.ArgumentParser) -> None:
    if getattr(args, "trials", 1) < 1:
        parser.error("--trials must be >= 1")
    if hasattr(args, "ksc_len") and not 1 <= args.ksc_len <= 10:
        parser.error("--ksc-len must lie in [1, 10]")
    if getattr(args, "participants", 2) < 2:
        parser.error("--participants must be >= 2")
    if getattr(args, "kdf_iterations", 1) < 1:
        parser.error("--kdf-iterations must be >= 1")
    if args.verb == "attack" and args.posture == "colocated" and args.mode == "bruteforce":
        parser.error("bruteforce requires --posture network: without the session "
                     "randomness a colocated attacker cannot check candidate keys")
    if args.verb == "entropy" and (args.ksc_len_range.start < 1 or args.ksc_len_range.stop > 11):
        parser.error("--ksc-len-range must lie within 1..10")
    if args.verb == "pair" and not 0.0 <= args.misselect <= 1.0:
        parser.error("--misselect must lie in [0, 1]")


def cmd_pair(args) -> int:
    cfg = ExperimentConfig(
        trials=args.trials,
        participants=args.participants,
        ksc_length=args.ksc_len,
        sensor=GazeSensorModel(angular_error_deg=args.noise_deg, misselect_prob=args.misselect),
        transport=args.transport,
        seed=args.seed,
        kdf_iterations=args.kdf_iterations,
        record_logs=args.log is not None,
    )
    report = run_experiment(cfg)
    print(format_summary(report))
    if args.out is not None:
        export_csv(report, args.out)
        print(f"wrote {args.out}")
    if args.log is not None:
        with args.log.open("w", encoding="utf-8") as fh:
            for r in report.records:
                fh.writelines(line + "\n" for line in r.log)
        print(f"wrote {args.log}")
    return 0


def cmd_attack(args) -> int:
    grid = GridConfig()
    n_p = math.perm(grid.hologram_count, args.ksc_len)
    if args.posture == "network" and args.mode == "bruteforce":
        sessions, per_session = args.trials, 1
    else:
        sessions = math.ceil(args.trials / GUESSES_PER_SESSION)
        per_session = math.ceil(args.trials / sessions)
    cfg = ExperimentConfig(
        trials=sessions,
        ksc_length=args.ksc_len,
        attacker=args.posture,
        attack_mode=args.mode,
        guesses_per_session=per_session,
        seed=args.seed,
        kdf_iterations=args.kdf_iterations,
    )
    report = run_experiment(cfg)
    print(format_summary(report))
    if args.posture == "network" and args.mode == "single":
        print(f"analytic single-guess rate: 1/{n_p} = {1 / n_p:.6g}")
    elif args.mode == "bruteforce":
        recovered = sum(r.attack_success or 0 for r in report.records)
        print(f"keys recovered: {recovered}/{report.trials} "
              f"({100 * recovered / report.trials:.1f}%)")
        print(f"mean guesses: {report.mean_guesses:.1f} "
              f"(expected {(n_p + 1) / 2:.1f}, worst case {n_p})")
    else:
        space = adversary.colocated_guess_space(grid, args.ksc_len)
        ref = adversary.origin_inclusive_guess_space(grid, args.ksc_len)
        print(f"analytic single-guess rate: 1/{space} = {1 / space:.6g} (origin excluded)")
        print(f"reference without origin exclusion: 1/{ref} = {1 / ref:.6g}")
        print("a matching guess still yields no key: the salt was never overheard")
    if args.out is not None:
        export_csv(report, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_entropy(args) -> int:
    rows = ksc_tradeoff_table(args.grid, args.ksc_len_range)
    print(f"{'P':>3} {'E_bits':>9} {'KSC_bits':>9}")
    for r in rows:
        print(f"{r.ksc_length:>3} {r.e_bits:>9.3f} {r.ksc_bits:>9.3f}")
    if args.out is not None:
        with args.out.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ksc_length", "e_bits", "ksc_bits"])
            for r in rows:
                w.writerow([r.ksc_length, f"{r.e_bits:.6f}", f"{r.ksc_bits:.6f}"])
        print(f"wrote {args.out}")
    return 0


def _split_trials(lines: list[str]) -> list[list[str]]:
    """Split a log holding several trials at each trial header record."""
    chunks: list[list[str]] = []
    for lineno, rec in parse_log(lines):
        if rec["type"] == "trial" or not chunks:
            chunks.append([])
        chunks[-1].append(lines[lineno - 1])
    return chunks


def cmd_replay(args) -> int:
    try:
        lines = args.log.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        print(f"gazepair replay: {exc}", file=sys.stderr)
        return 1
    try:
        chunks = _split_trials(lines)
        records = []
        for chunk in chunks:
            replay = replay_log(chunk)
            header = [m for m in replay.meta if m["type"] == "trial"]
            if header:
                print(f"trial {header[0]['trial_id']}:")
                records.append(replay_trial(chunk))
            for line in replay.summary_lines():
                print(f"  {line}")
    except ReplayError as exc:
        print(f"gazepair replay: {args.log}: {exc}", file=sys.stderr)
        return 1
    if records:
        sys.stdout.write(csv_text(records))
    return 0


COMMANDS = {"pair": cmd_pair, "attack": cmd_attack, "entropy": cmd_entropy, "replay": cmd_replay}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", 0) is None:
        args.seed = _default_seed()
    _validate(args, parser)
    try:
        return COMMANDS[args.verb](args)
    except ValueError as exc:
        parser.error(str(exc))
    return 2


if __name__ == "__main__":
    sys.exit(main())
