from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterator, Optional, Union

DEFAULT_KSC_LENGTH = 3


@dataclass(frozen=True)
class Ksc:
    """Key sequence cue: ordered, non-repeating hologram labels."""

    digits: tuple[int, ...]

    def __post_init__(self) -> None:
        digits = tuple(int(d) for d in self.digits)
        object.__setattr__(self, "digits", digits)
        if not digits:
            raise ValueError("a KSC needs at least one digit")
        if any(not 0 <= d <= 9 for d in digits):
            raise ValueError("KSC digits must lie in 0-9")
        if len(set(digits)) != len(digits):
            raise ValueError(f"KSC digits must not repeat: {self}")

    @classmethod
    def parse(cls, text: str) -> "Ksc":
        if not text.isdigit():
            raise ValueError(f"not a digit string: {text!r}")
        return cls(tuple(int(ch) for ch in text))

    @classmethod
    def of(cls, value: Union["Ksc", str]) -> "Ksc":
        return value if isinstance(value, Ksc) else cls.parse(value)

    def __str__(self) -> str:
        return "".join(str(d) for d in self.digits)

    def __iter__(self) -> Iterator[int]:
        return iter(self.digits)

    def __len__(self) -> int:
        return len(self.digits)


def generate_ksc(length: int = DEFAULT_KSC_LENGTH, rng: Optional[random.Random] = None,
                 hologram_count: int = 10) -> Ksc:
    """Uniform draw over the ordered non-repeating digit sequences of ``length``."""
    if not 1 <= length <= min(hologram_count, 10):
        raise ValueError(f"KSC length must be between 1 and {min(hologram_count, 10)}")
    rng = rng or random.SystemRandom()
    return Ksc(tuple(rng.sample(range(hologram_count), length)))
