"""Eavesdropping attackers for the two mutually exclusive threat postures.

A *network* attacker sees every in-band frame but never hears the spoken
cue.  A *colocated* attacker hears the cue but sees no traffic.  Attack
functions only ever read an ``AttackerKnowledge``; when success cannot be
judged from the attacker's own view (the colocated case) the caller passes a
referee callable that answers yes/no for a candidate secret.
"""

from __future__ import annotations

import enum
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .gaze import SharedSecret, expected_secret
from .geometry import GridCell, GridConfig, HologramLayout, cell_string
from .keys import (
    KDF_ITERATIONS,
    Confirmation,
    SessionRandomness,
    SymmetricKey,
    derive_key,
    verify_confirmation,
)
from .protocol.ksc import Ksc
from .protocol.messages import (
    ConfirmationMessage,
    DecodeError,
    LayoutMessage,
    SessionRandMessage,
    decode_message,
)

REFERENCE_COLOCATED_GUESS_SPACE = 344_400


class Posture(enum.Enum):
    NETWORK = "network"
    COLOCATED = "colocated"


class IncompleteKnowledge(ValueError):
    pass


@dataclass
class AttackerKnowledge:
    posture: Posture
    grid_config: GridConfig = field(default_factory=GridConfig)
    ksc_length: int = 3
    kdf_iterations: int = KDF_ITERATIONS
    observed_frames: list[bytes] = field(default_factory=list)
    heard_ksc: Optional[Ksc] = None
    # Candidate KSC -> (verified, key).  Key derivation is deterministic, so
    # repeated guesses against the same capture reuse earlier work.
    _verdicts: dict[tuple[int, ...], tuple[bool, Optional[SymmetricKey]]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self) -> None:
        if self.posture is Posture.NETWORK and self.heard_ksc is not None:
            raise ValueError("a network attacker cannot also overhear the KSC")
        if self.posture is Posture.COLOCATED and self.observed_frames:
            raise ValueError("a colocated attacker cannot also observe network frames")

    @classmethod
    def from_tap(cls, frames: Iterable[bytes], **kw) -> "AttackerKnowledge":
        return cls(Posture.NETWORK, observed_frames=list(frames), **kw)

    @classmethod
    def from_overheard(cls, ksc: Ksc, **kw) -> "AttackerKnowledge":
        return cls(Posture.COLOCATED, heard_ksc=ksc, **kw)

    def intercepted(self) -> tuple[HologramLayout, SessionRandomness, list[Confirmation]]:
        """Layout, session randomness and confirmations decoded from the tap log."""
        if self.posture is not Posture.NETWORK:
            raise IncompleteKnowledge("only the network posture observes frames")
        layout = randomness = None
        confirmations = []
        for frame in self.observed_frames:
            try:
                m = decode_message(frame)
            except DecodeError:
                continue
            if isinstance(m, LayoutMessage) and layout is None:
                layout = m.layout
            elif isinstance(m, SessionRandMessage) and randomness is None:
                randomness = m.randomness
            elif isinstance(m, ConfirmationMessage):
                confirmations.append(m.confirmation)
        if layout is None or randomness is None or not confirmations:
            raise IncompleteKnowledge("tap log lacks a Layout, SessionRand or Confirmation")
        return layout, randomness, confirmations


@dataclass(frozen=True)
class AttackOutcome:
    succeeded: bool
    guesses_made: int
    recovered_key: Optional[SymmetricKey] = None
    # Colocated only: a matching secret is useless without the session salt.
    key_derivable: bool = True


def _try_candidate(k: AttackerKnowledge, candidate: Ksc, intercepted) -> tuple[bool, Optional[SymmetricKey]]:
    cached = k._verdicts.get(candidate.digits)
    if cached is not None:
        return cached
    layout, randomness, confirmations = intercepted
    secret = expected_secret(candidate, layout, k.grid_config)
    key = derive_key(secret, randomness.salt, k.kdf_iterations)
    ok = bool(verify_confirmation(key, randomness, confirmations[0]))
    verdict = (ok, key if ok else None)
    k._verdicts[candidate.digits] = verdict
    return verdict


def guess_ksc_once(k: AttackerKnowledge, rng: random.Random,
                   candidate: Optional[Ksc] = None) -> AttackOutcome:
    """One uniformly random KSC guess, checked against a captured confirmation."""
    intercepted = k.intercepted()
    if candidate is None:
        candidate = Ksc(tuple(rng.sample(range(k.grid_config.hologram_count), k.ksc_length)))
    ok, key = _try_candidate(k, candidate, intercepted)
    return AttackOutcome(ok, 1, key)


def ksc_candidates(hologram_count: int, length: int) -> Iterable[Ksc]:
    for digits in itertools.permutations(range(hologram_count), length):
        yield Ksc(digits)


def bruteforce_ksc(k: AttackerKnowledge) -> AttackOutcome:
    """Try every KSC in lexicographic order until a derived key verifies."""
    intercepted = k.intercepted()
    guesses = 0
    for candidate in ksc_candidates(k.grid_config.hologram_count, k.ksc_length):
        guesses += 1
        ok, key = _try_candidate(k, candidate, intercepted)
        if ok:
            return AttackOutcome(True, guesses, key)
    return AttackOutcome(False, guesses)


# -- colocated posture -------------------------------------------------------

def colocated_guess_space(config: GridConfig, ksc_length: int) -> int:
    """Ordered placements of the cued holograms: distinct non-origin cells times depth."""
    return math.perm(config.plane_cells, ksc_length) * config.z_count


def origin_inclusive_guess_space(config: GridConfig, ksc_length: int) -> int:
    """Same count without excluding the origin cell (42*41*40*5 = 344,400 by default)."""
    return math.perm(config.x_count * config.y_count, ksc_length) * config.z_count


def random_placement_guess(k: AttackerKnowledge, rng: random.Random) -> tuple[GridCell, ...]:
    cfg = k.grid_config
    depth = rng.choice(cfg.depth_planes())
    return tuple(GridCell(x, y, depth) for x, y in rng.sample(cfg.plane_positions(), len(k.heard_ksc)))


def guess_layout_once(
    k: AttackerKnowledge,
    rng: random.Random,
    referee: Callable[[SharedSecret], bool],
    guess: Optional[tuple[GridCell, ...]] = None,
) -> AttackOutcome:
    """Guess where the cued holograms were and form the candidate secret.

    ``referee`` reports whether a candidate equals the true secret.  Even a
    correct guess yields no key: the salt travelled only in-band.
    """
    if k.posture is not Posture.COLOCATED or k.heard_ksc is None:
        raise IncompleteKnowledge("colocated attack needs an overheard KSC")
    if guess is None:
        guess = random_placement_guess(k, rng)
    candidate = SharedSecret("".join(cell_string(c) for c in guess))
    return AttackOutcome(referee(candidate), 1, None, key_derivable=False)


def placement_guess_batch(k: AttackerKnowledge, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent placement guesses as rows (cell index per cued digit..., depth).

    Cell indices refer to ``grid_config.plane_positions()``.  Each row is drawn
    exactly as ``random_placement_guess`` draws: uniform depth, then distinct
    cells uniformly without replacement.
    """
    if k.posture is not Posture.COLOCATED or k.heard_ksc is None:
        raise IncompleteKnowledge("colocated attack needs an overheard KSC")
    cfg = k.grid_config
    p = len(k.heard_ksc)
    m = cfg.plane_cells
    out = np.empty((n, p + 1), dtype=np.int64)
    chosen = np.empty((n, 0), dtype=np.int64)
    for j in range(p):
        # Uniform over the m - j cells not yet taken: draw a rank, then skip taken indices.
        r = rng.integers(0, m - j, size=n)
        for prev in np.sort(chosen, axis=1).T:
            r = r + (r >= prev)
        out[:, j] = r
        chosen = np.column_stack([chosen, r])
    out[:, p] = rng.integers(0, cfg.z_count, size=n) + cfg.z_min
    return out
