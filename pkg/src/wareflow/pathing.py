"""Shortest paths on floor plans: A* with the Manhattan distance heuristic.

All movement is 4-connected, so the Manhattan heuristic is admissible and
A* returns true shortest paths. Tie-breaking is fixed (neighbors expanded
up, down, left, right; FIFO among equal f-scores) so paths are deterministic.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .floorplan import Coord, FloorPlan


class InvalidCoord(ValueError):
    """Queried coordinate is a wall or out of bounds."""


@dataclass(frozen=True)
class PathResult:
    """Outcome of a shortest-path query.

    distance is None when the target is unreachable. steps lists the cells
    from source (exclusive) to target (inclusive); empty when source equals
    target or when unreachable.
    """

    distance: int | None
    steps: tuple[Coord, ...]

    @property
    def reachable(self) -> bool:
        return self.distance is not None


def manhattan(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def default_sentinel(plan: FloorPlan) -> int:
    """Default stand-in distance for unreachable or absent targets: strictly
    larger than any feasible path length on the plan."""
    return plan.width * plan.height + 1


def _check_free(plan: FloorPlan, coord: Coord, label: str) -> None:
    x, y = coord
    if not plan.in_bounds(x, y):
        raise InvalidCoord(f"{label} {coord} out of bounds on {plan.width}x{plan.height} plan")
    if not plan.is_free(x, y):
        raise InvalidCoord(f"{label} {coord} is a wall")


def astar(plan: FloorPlan, source: Coord, target: Coord) -> PathResult:
    """Shortest 4-connected path from source to target, both free cells."""
    _check_free(plan, source, "source")
    _check_free(plan, target, "target")
    if source == target:
        return PathResult(0, ())

    free = plan.free_set
    g: dict[Coord, int] = {source: 0}
    came: dict[Coord, Coord] = {}
    counter = 0  # FIFO order among equal f-scores
    heap = [(manhattan(source, target), 0, source)]
    while heap:
        f, _, cur = heapq.heappop(heap)
        gc = g[cur]
        if f > gc + manhattan(cur, target):
            continue  # stale entry
        if cur == target:
            steps = [cur]
            while cur in came:
                cur = came[cur]
                steps.append(cur)
            steps.pop()  # drop the source
            steps.reverse()
            return PathResult(gc, tuple(steps))
        x, y = cur
        ng = gc + 1
        for nxt in ((x, y - 1), (x, y + 1), (x - 1, y), (x + 1, y)):
            if nxt in free and ng < g.get(nxt, 1 << 30):
                g[nxt] = ng
                came[nxt] = cur
                counter += 1
                heapq.heappush(heap, (ng + manhattan(nxt, target), counter, nxt))
    return PathResult(None, ())


def distance_row(
    plan: FloorPlan,
    source: Coord,
    targets: list[Coord | None],
    sentinel: int,
    memo: DistanceMemo | None = None,
) -> list[int]:
    """A* distance from source to each target; absent (None) or unreachable
    targets map to the sentinel."""
    row = []
    for tgt in targets:
        if tgt is None:
            row.append(sentinel)
        elif memo is not None:
            row.append(memo.distance(source, tgt, sentinel))
        else:
            d = astar(plan, source, tgt).distance
            row.append(sentinel if d is None else d)
    return row


class DistanceMemo:
    """Per-decision-step distance cache.

    Distances are recomputed fresh at every step (the environment mutates
    between steps), but within one step many queries repeat; this memo keys
    on the unordered cell pair, exploiting symmetry.
    """

    def __init__(self, plan: FloorPlan):
        self.plan = plan
        self._cache: dict[tuple[Coord, Coord], int | None] = {}

    def distance(self, a: Coord, b: Coord, sentinel: int | None = None) -> int | None:
        key = (a, b) if a <= b else (b, a)
        try:
            d = self._cache[key]
        except KeyError:
            d = astar(self.plan, a, b).distance
            self._cache[key] = d
        if d is None and sentinel is not None:
            return sentinel
        return d
