"""Discrete 3D hologram grid: layout generation and gaze discretization.

Cells are addressed by signed integer indices.  With the default frame
x runs over -3..3, y over 0..5 and z (depth) over 1..5, and a cell's
center sits at ``index * cell_size`` on every axis.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import NamedTuple, Optional


class GridCell(NamedTuple):
    x: int
    y: int
    z: int


class Point3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class GridConfig:
    x_count: int = 7
    y_count: int = 6
    z_count: int = 5
    hologram_count: int = 10
    cell_size: float = 1.0
    error_threshold: float = 0.5
    # Lowest index per axis.  x_min defaults to centering the origin column.
    x_min: Optional[int] = None
    y_min: int = 0
    z_min: int = 1

    def __post_init__(self) -> None:
        if self.x_min is None:
            object.__setattr__(self, "x_min", -((self.x_count - 1) // 2))
        if min(self.x_count, self.y_count, self.z_count) < 1:
            raise ValueError("grid axis counts must be >= 1")
        if not self.x_min <= 0 <= self.x_max or not self.y_min <= 0 <= self.y_max:
            raise ValueError("in-plane origin (0, 0) must lie inside the grid")
        if self.hologram_count < 1:
            raise ValueError("hologram_count must be >= 1")
        if self.hologram_count > self.plane_cells:
            raise ValueError(
                f"hologram_count {self.hologram_count} exceeds the "
                f"{self.plane_cells} non-origin cells of a {self.x_count}x{self.y_count} plane"
            )
        if self.cell_size <= 0 or self.error_threshold < 0:
            raise ValueError("cell_size must be positive and error_threshold non-negative")
        if 2 * self.error_threshold > self.cell_size:
            raise ValueError("2 * error_threshold must not exceed cell_size")

    @property
    def x_max(self) -> int:
        return self.x_min + self.x_count - 1

    @property
    def y_max(self) -> int:
        return self.y_min + self.y_count - 1

    @property
    def z_max(self) -> int:
        return self.z_min + self.z_count - 1

    @property
    def plane_cells(self) -> int:
        """Cells available to holograms on one depth plane (origin excluded)."""
        return self.x_count * self.y_count - 1

    def in_bounds(self, cell: GridCell) -> bool:
        return (
            self.x_min <= cell.x <= self.x_max
            and self.y_min <= cell.y <= self.y_max
            and self.z_min <= cell.z <= self.z_max
        )

    def plane_positions(self) -> list[tuple[int, int]]:
        """Non-origin (x, y) positions in row-major order."""
        return [
            (x, y)
            for x in range(self.x_min, self.x_max + 1)
            for y in range(self.y_min, self.y_max + 1)
            if (x, y) != (0, 0)
        ]

    def depth_planes(self) -> list[int]:
        return list(range(self.z_min, self.z_max + 1))


@dataclass(frozen=True)
class HologramLayout:
    """Hologram positions, ``cells[d]`` being the hologram labeled with digit d."""

    cells: tuple[GridCell, ...]
    depth_plane: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(GridCell(*c) for c in self.cells))
        if len(set(self.cells)) != len(self.cells):
            raise ValueError("hologram cells must be pairwise distinct")
        if any(c.z != self.depth_plane for c in self.cells):
            raise ValueError("all holograms must share the layout's depth plane")

    def __len__(self) -> int:
        return len(self.cells)

    def cell_of(self, label: int) -> GridCell:
        return self.cells[label]

    def label_at(self, cell: GridCell) -> Optional[int]:
        try:
            return self.cells.index(cell)
        except ValueError:
            return None

    def validate(self, config: GridConfig) -> None:
        """Raise ValueError unless this layout is legal under ``config``."""
        if len(self.cells) != config.hologram_count:
            raise ValueError(
                f"layout has {len(self.cells)} holograms, config expects {config.hologram_count}"
            )
        for cell in self.cells:
            if not config.in_bounds(cell):
                raise ValueError(f"hologram cell {cell} is outside the grid")
            if (cell.x, cell.y) == (0, 0):
                raise ValueError("no hologram may occupy the in-plane origin")
        if min_separation(self, config) < 2 * config.error_threshold:
            raise ValueError("holograms closer than twice the error threshold")


def generate_layout(config: GridConfig, rng: random.Random) -> HologramLayout:
    """Place ``config.hologram_count`` labeled holograms on one random depth plane.

    The depth plane is uniform over the grid's planes and the labeled cells are
    an ordered uniform sample, without replacement, of the non-origin cells.
    """
    depth = rng.choice(config.depth_planes())
    positions = rng.sample(config.plane_positions(), config.hologram_count)
    return HologramLayout(
        cells=tuple(GridCell(x, y, depth) for x, y in positions),
        depth_plane=depth,
    )


def cell_center(cell: GridCell, config: GridConfig) -> Point3:
    if not config.in_bounds(cell):
        raise ValueError(f"cell {tuple(cell)} is outside the grid")
    s = config.cell_size
    return Point3(cell.x * s, cell.y * s, cell.z * s)


def _nearest_index(value: float, cell_size: float) -> int:
    # Half-way values round up; Python round() would round half to even.
    return math.floor(value / cell_size + 0.5)


def nearest_cell(point: Point3, config: GridConfig) -> Optional[GridCell]:
    """Cell whose center is nearest to ``point``, or None outside the grid."""
    if not all(math.isfinite(v) for v in point):
        return None
    cell = GridCell(*(_nearest_index(v, config.cell_size) for v in point))
    return cell if config.in_bounds(cell) else None


def cell_string(cell: GridCell) -> str:
    """Signed decimal axis values concatenated, e.g. (-2, 2, 1) -> "-221"."""
    return f"{cell.x}{cell.y}{cell.z}"


def discretize(point: Point3, config: GridConfig) -> Optional[str]:
    """Render a gaze point as its nearest cell's string; None when off-grid."""
    cell = nearest_cell(point, config)
    return None if cell is None else cell_string(cell)


def min_separation(layout: HologramLayout, config: GridConfig) -> float:
    centers = [cell_center(c, config) for c in layout.cells]
    best = math.inf
    for i, a in enumerate(centers):
        for b in centers[i + 1:]:
            best = min(best, math.dist(a, b))
    return best
