"""Core entities (task types, skills, tasks, agents) and the task reward.

Task types are dense small integers (the benchmark scenarios use three,
rendered elsewhere as red/green/blue). Each task carries a priority p
(1 = highest) and a reward scale r >= 1; while active it emits
-exp(-(p + 1/r)) to the shared team reward at every time-step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .floorplan import Coord

TaskType = int


class DomainError(ValueError):
    """Argument outside the domain an operation is defined on."""


@dataclass(frozen=True)
class TaskSpec:
    """Template for one task slot.

    location fixes the spawn cell for stationary tasks; None means the task
    is non-stationary and respawns at random free cells.
    """

    task_type: TaskType
    workload: int
    capacity: int
    priority: int = 1
    reward_scale: float = 1.0
    location: Coord | None = None

    def __post_init__(self):
        if self.workload < 1:
            raise DomainError(f"workload must be >= 1, got {self.workload}")
        if self.capacity < 1:
            raise DomainError(f"capacity must be >= 1, got {self.capacity}")
        if self.priority < 1:
            raise DomainError(f"priority must be >= 1, got {self.priority}")
        if self.reward_scale < 1.0:
            raise DomainError(f"reward_scale must be >= 1, got {self.reward_scale}")

    @property
    def stationary(self) -> bool:
        return self.location is not None

    @property
    def step_reward(self) -> float:
        return task_step_reward(self.reward_scale, self.priority)


@dataclass(slots=True)
class TaskInstance:
    """An active task occupying a slot."""

    slot: int
    spec: TaskSpec
    location: Coord
    remaining_work: int
    arrival_time: int
    completion_time: int | None = None


@dataclass(slots=True)
class AgentState:
    """One agent: position, skill set, and its current slot assignment
    (None means Stay)."""

    id: int
    location: Coord
    skills: frozenset[TaskType]
    assignment: int | None = None


def task_step_reward(r: float, p: int) -> float:
    """Per-time-step reward -exp(-(p + 1/r)) emitted by an active task.

    Strictly negative; moves toward 0 as priority p grows (lower urgency)
    and away from 0 as the scale r grows within a priority band.
    """
    if r < 1.0:
        raise DomainError(f"reward scale must be >= 1, got {r}")
    if p < 1:
        raise DomainError(f"priority must be >= 1, got {p}")
    return -math.exp(-(p + 1.0 / r))


@dataclass(frozen=True)
class DominanceWitness:
    """Certificate that one priority band strictly outweighs another.

    floor_hi is the smallest reward magnitude attainable at the higher
    priority (at r = 1); ceiling_lo is the supremum of magnitudes at the
    lower priority (the r -> infinity limit, never attained)."""

    holds: bool
    floor_hi: float
    ceiling_lo: float

    def __bool__(self) -> bool:
        return self.holds


def priority_dominates(p_hi: int, p_lo: int) -> DominanceWitness:
    """Check that every task at priority p_hi outweighs every task at
    priority p_lo regardless of reward scales (p_hi < p_lo numerically,
    i.e. higher urgency)."""
    if p_hi < 1 or p_lo < 1:
        raise DomainError("priorities must be >= 1")
    if p_hi >= p_lo:
        raise DomainError(f"expected p_hi < p_lo, got {p_hi} >= {p_lo}")
    # |R(r, p)| = exp(-(p + 1/r)): minimized over r at r=1, supremum as r->inf
    floor_hi = math.exp(-(p_hi + 1.0))
    ceiling_lo = math.exp(-float(p_lo))
    # the supremum is never attained for finite r, so >= suffices for strictness
    return DominanceWitness(floor_hi >= ceiling_lo, floor_hi, ceiling_lo)


def can_contribute(agent: AgentState, task: TaskInstance, contributors_so_far: int) -> bool:
    """Whether this agent's presence counts toward the task this time-step.

    Requires the slot assignment to match, the skill, spare capacity, actual
    co-location, and outstanding work. An assigned but unskilled agent may
    stand on the task without contributing (a wasted trip by design).
    """
    return (
        agent.assignment == task.slot
        and task.spec.task_type in agent.skills
        and contributors_so_far < task.spec.capacity
        and agent.location == task.location
        and task.remaining_work > 0
    )
