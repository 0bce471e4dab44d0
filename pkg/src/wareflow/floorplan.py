"""Warehouse floor plans: ASCII parsing/rendering and the benchmark layouts."""

from __future__ import annotations

import numpy as np

Coord = tuple[int, int]

WALL_CHAR = "#"
FREE_CHAR = "."


class ParseError(ValueError):
    """Malformed ASCII floor plan."""


class FloorPlan:
    """Immutable occupancy grid.

    Coordinates are (x, y) with x the column and y the row; (0, 0) is the
    top-left cell of the ASCII rendering. Every cell is either free
    (walkable) or a wall. All agent and task coordinates used in an episode
    must lie on free cells.
    """

    __slots__ = ("width", "height", "free_cells", "_free")

    def __init__(self, width: int, height: int, free_cells):
        if width < 1 or height < 1:
            raise ValueError(f"plan dimensions must be positive, got {width}x{height}")
        free = frozenset(free_cells)
        if not free:
            raise ValueError("plan must contain at least one free cell")
        for (x, y) in free:
            if not (0 <= x < width and 0 <= y < height):
                raise ValueError(f"free cell {(x, y)} outside {width}x{height} plan")
        self.width = width
        self.height = height
        self._free = free
        # row-major order; used wherever a deterministic cell ordering matters
        self.free_cells: tuple[Coord, ...] = tuple(
            sorted(free, key=lambda c: (c[1], c[0]))
        )

    def is_free(self, x: int, y: int) -> bool:
        return (x, y) in self._free

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    @property
    def free_set(self) -> frozenset[Coord]:
        return self._free

    def render(self) -> str:
        """ASCII rendering, one row per line, trailing newline included."""
        rows = []
        for y in range(self.height):
            rows.append(
                "".join(
                    FREE_CHAR if (x, y) in self._free else WALL_CHAR
                    for x in range(self.width)
                )
            )
        return "\n".join(rows) + "\n"

    def __eq__(self, other) -> bool:
        if not isinstance(other, FloorPlan):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self._free == other._free
        )

    def __hash__(self) -> int:
        return hash((self.width, self.height, self._free))

    def __repr__(self) -> str:
        return f"FloorPlan({self.width}x{self.height}, {len(self._free)} free)"


def parse_floorplan(text: str) -> FloorPlan:
    """Parse an ASCII plan: '#' is wall, '.' is free. Trailing newline optional."""
    lines = text.splitlines()
    if not lines or all(line == "" for line in lines):
        raise ParseError("empty floor plan")
    width = len(lines[0])
    free = []
    for y, line in enumerate(lines):
        if len(line) != width:
            raise ParseError(f"ragged line {y}: expected width {width}, got {len(line)}")
        for x, ch in enumerate(line):
            if ch == FREE_CHAR:
                free.append((x, y))
            elif ch != WALL_CHAR:
                raise ParseError(f"unknown character {ch!r} at ({x}, {y})")
    if not free:
        raise ParseError("floor plan has no free cells")
    return FloorPlan(width, len(lines), free)


def make_corridor(arm_length: int, stem_length: int) -> FloorPlan:
    """T-shaped corridor: a 1-cell-high bar of width 2*arm_length+1 with a
    vertical stem of stem_length cells descending from the bar's center."""
    if arm_length < 1 or stem_length < 1:
        raise ValueError("arm_length and stem_length must be >= 1")
    width = 2 * arm_length + 1
    height = 1 + stem_length
    free = [(x, 0) for x in range(width)]
    free += [(arm_length, y) for y in range(1, height)]
    return FloorPlan(width, height, free)


def make_open_grid(width: int, height: int) -> FloorPlan:
    """Fully open rectangular plan (no walls)."""
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    return FloorPlan(width, height, [(x, y) for x in range(width) for y in range(height)])


def make_maze(width: int, height: int, seed: int) -> FloorPlan:
    """Connected maze carved by a recursive backtracker on a
    ceil(width/2) x ceil(height/2) lattice. Deterministic under seed."""
    if width < 3 or height < 3:
        raise ValueError("maze dimensions must be >= 3")
    lat_w = (width + 1) // 2
    lat_h = (height + 1) // 2
    rng = np.random.default_rng(seed)
    free: set[Coord] = {(0, 0)}
    visited = {(0, 0)}
    stack = [(0, 0)]
    while stack:
        ci, cj = stack[-1]
        choices = []
        for di, dj in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            ni, nj = ci + di, cj + dj
            if 0 <= ni < lat_w and 0 <= nj < lat_h and (ni, nj) not in visited:
                choices.append((ni, nj))
        if not choices:
            stack.pop()
            continue
        ni, nj = choices[int(rng.integers(len(choices)))]
        visited.add((ni, nj))
        # carve the destination cell and the wall cell between
        free.add((2 * ni, 2 * nj))
        free.add((ci + ni, cj + nj))
        stack.append((ni, nj))
    return FloorPlan(width, height, free)
