"""Simulated eye-gaze sensor and shared-secret assembly."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Iterable

from .geometry import (
    GridCell,
    GridConfig,
    HologramLayout,
    Point3,
    cell_string,
    nearest_cell,
)


class Trigger(enum.Enum):
    GESTURE = "gesture"
    DWELL = "dwell"


# Nominal time between gesture-triggered captures, simulated seconds.
GESTURE_INTERVAL = 1.0
DEFAULT_DWELL_MISSELECT = 0.02


@dataclass(frozen=True)
class GazeSensorModel:
    angular_error_deg: float = 1.5
    viewer_distance: float = 2.0
    misselect_prob: float = 0.0
    trigger: Trigger = Trigger.GESTURE
    dwell_seconds: float = 1.0

    def __post_init__(self) -> None:
        if self.angular_error_deg < 0:
            raise ValueError("angular_error_deg must be >= 0")
        if self.viewer_distance <= 0:
            raise ValueError("viewer_distance must be positive")
        if not 0.0 <= self.misselect_prob <= 1.0:
            raise ValueError("misselect_prob must lie in [0, 1]")
        if self.trigger is Trigger.DWELL and self.dwell_seconds <= 0:
            raise ValueError("dwell_seconds must be positive for dwell triggering")

    @classmethod
    def dwell(cls, dwell_seconds: float = 1.0, **kw) -> "GazeSensorModel":
        """Dwell-triggered sensor; accidental selections make misselects likelier."""
        kw.setdefault("misselect_prob", DEFAULT_DWELL_MISSELECT)
        return cls(trigger=Trigger.DWELL, dwell_seconds=dwell_seconds, **kw)

    @property
    def sigma(self) -> float:
        """Per-axis in-plane position error in grid units."""
        return self.viewer_distance * math.tan(math.radians(self.angular_error_deg))

    @property
    def capture_interval(self) -> float:
        return self.dwell_seconds if self.trigger is Trigger.DWELL else GESTURE_INTERVAL


@dataclass(frozen=True)
class GazeSample:
    point: Point3
    trigger_time: float


@dataclass(frozen=True)
class SharedSecret:
    value: str = field(repr=False)

    def __post_init__(self) -> None:
        if not self.value:
            raise ValueError("shared secret must be non-empty")

    @property
    def length_digits(self) -> int:
        return sum(ch.isdigit() for ch in self.value)


class MissedCapture(Exception):
    """A gaze capture landed outside every hologram's error cube."""

    def __init__(self, position: int, point: Point3):
        super().__init__(f"capture {position} at {tuple(point)} selected no hologram")
        self.position = position
        self.point = point


def sample_gaze(
    target: GridCell,
    layout: HologramLayout,
    model: GazeSensorModel,
    rng: random.Random,
    trigger_time: float = 0.0,
    cell_size: float = 1.0,
) -> GazeSample:
    if target not in layout.cells:
        raise ValueError(f"{tuple(target)} is not a hologram cell of the layout")
    if model.misselect_prob > 0 and rng.random() < model.misselect_prob:
        others = [c for c in layout.cells if c != target]
        if others:
            target = rng.choice(others)
    sigma = model.sigma
    x, y, z = (v * cell_size for v in target)
    if sigma > 0:
        x += rng.gauss(0.0, sigma)
        y += rng.gauss(0.0, sigma)
    return GazeSample(Point3(x, y, z), trigger_time)


def build_shared_secret(
    ksc: Iterable[int],
    layout: HologramLayout,
    model: GazeSensorModel,
    config: GridConfig,
    rng: random.Random,
) -> SharedSecret:
    """Capture one gaze sample per KSC digit, in order, and concatenate the cells.

    Raises MissedCapture naming the first position whose sample does not fall
    inside any hologram's cell.
    """
    parts = []
    t = 0.0
    for position, digit in enumerate(ksc):
        t += model.capture_interval
        target = layout.cell_of(digit)
        sample = sample_gaze(target, layout, model, rng, t, config.cell_size)
        cell = nearest_cell(sample.point, config)
        if cell is None or cell not in layout.cells:
            raise MissedCapture(position, sample.point)
        parts.append(cell_string(cell))
    return SharedSecret("".join(parts))


def expected_secret(ksc: Iterable[int], layout: HologramLayout, config: GridConfig) -> SharedSecret:
    """The secret a perfect observer of ``layout`` would enter for ``ksc``."""
    cells = [layout.cell_of(d) for d in ksc]
    if not all(config.in_bounds(c) for c in cells):
        raise ValueError("layout has holograms outside the grid")
    return SharedSecret("".join(cell_string(c) for c in cells))
