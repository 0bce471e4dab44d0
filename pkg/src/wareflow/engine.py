"""Discrete-time warehouse environment.

One tick runs a fixed phase order: arrivals, movement, work, completion,
reward. Schedules are submitted only at decision boundaries (every
decision_interval ticks) and are frozen in between; there is no preemption.
All randomness flows through a single seeded generator, so a given
(config, seed, action sequence) always reproduces the same trace bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import AgentState, TaskInstance, TaskSpec, can_contribute
from .floorplan import Coord, FloorPlan, parse_floorplan
from .pathing import DistanceMemo, astar, default_sentinel, distance_row


class ConfigError(ValueError):
    """Invalid environment configuration."""


class ProtocolError(RuntimeError):
    """Environment driven out of its reset/submit/tick lifecycle."""


@dataclass(frozen=True)
class AgentSpec:
    """Per-agent configuration: skill set and spawn rule (None = uniform
    over free cells at reset)."""

    skills: frozenset[int]
    spawn: Coord | None = None


@dataclass(frozen=True)
class EnvConfig:
    plan: FloorPlan
    task_catalog: tuple[TaskSpec, ...]
    agents: tuple[AgentSpec, ...]
    arrival_probability: float = 0.5
    decision_interval: int = 10
    horizon: int = 500
    illegal_action_penalty: float = -1.0
    seed: int = 0

    @property
    def n_slots(self) -> int:
        return len(self.task_catalog)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def validate(self) -> None:
        if not self.task_catalog:
            raise ConfigError("task_catalog must declare at least one slot")
        if not 0.0 <= self.arrival_probability <= 1.0:
            raise ConfigError(f"arrival_probability must be in [0,1], got {self.arrival_probability}")
        if self.decision_interval < 1:
            raise ConfigError("decision_interval must be >= 1")
        if self.horizon < 1 or self.horizon % self.decision_interval != 0:
            raise ConfigError(
                f"horizon ({self.horizon}) must be a positive multiple of "
                f"decision_interval ({self.decision_interval})"
            )
        if self.illegal_action_penalty > 0:
            raise ConfigError("illegal_action_penalty must be <= 0")
        for spec in self.task_catalog:
            if spec.location is not None and not self.plan.is_free(*spec.location):
                raise ConfigError(f"stationary task location {spec.location} is not a free cell")
        for i, agent in enumerate(self.agents):
            if agent.spawn is not None and not self.plan.is_free(*agent.spawn):
                raise ConfigError(f"agent {i} spawn {agent.spawn} is not a free cell")

    def to_dict(self) -> dict:
        """Canonical JSON-serializable form (used in traces and manifests)."""
        return {
            "plan": self.plan.render(),
            "task_catalog": [
                {
                    "type": s.task_type,
                    "workload": s.workload,
                    "capacity": s.capacity,
                    "priority": s.priority,
                    "reward_scale": s.reward_scale,
                    "location": list(s.location) if s.location is not None else None,
                }
                for s in self.task_catalog
            ],
            "agents": [
                {
                    "skills": sorted(a.skills),
                    "spawn": list(a.spawn) if a.spawn is not None else None,
                }
                for a in self.agents
            ],
            "arrival_probability": self.arrival_probability,
            "decision_interval": self.decision_interval,
            "horizon": self.horizon,
            "illegal_action_penalty": self.illegal_action_penalty,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "EnvConfig":
        specs = tuple(
            TaskSpec(
                task_type=int(s["type"]),
                workload=int(s["workload"]),
                capacity=int(s["capacity"]),
                priority=int(s.get("priority", 1)),
                reward_scale=float(s.get("reward_scale", 1.0)),
                location=tuple(s["location"]) if s.get("location") is not None else None,
            )
            for s in d["task_catalog"]
        )
        agents = tuple(
            AgentSpec(
                skills=frozenset(int(t) for t in a["skills"]),
                spawn=tuple(a["spawn"]) if a.get("spawn") is not None else None,
            )
            for a in d["agents"]
        )
        return EnvConfig(
            plan=parse_floorplan(d["plan"]),
            task_catalog=specs,
            agents=agents,
            arrival_probability=float(d.get("arrival_probability", 0.5)),
            decision_interval=int(d.get("decision_interval", 10)),
            horizon=int(d.get("horizon", 500)),
            illegal_action_penalty=float(d.get("illegal_action_penalty", -1.0)),
            seed=int(d.get("seed", 0)),
        )

    def with_seed(self, seed: int) -> "EnvConfig":
        return EnvConfig(
            plan=self.plan,
            task_catalog=self.task_catalog,
            agents=self.agents,
            arrival_probability=self.arrival_probability,
            decision_interval=self.decision_interval,
            horizon=self.horizon,
            illegal_action_penalty=self.illegal_action_penalty,
            seed=seed,
        )


@dataclass
class StepReport:
    """Outcome of one tick. observations is filled only when the new time is
    a decision boundary (a fresh schedule is due); shared_reward is the team
    reward emitted this tick, identical for all agents."""

    time: int
    shared_reward: float
    illegal_flags: tuple[bool, ...]
    completed_slots: tuple[int, ...]
    done: bool
    observations: list[np.ndarray] | None = None


@dataclass
class Metrics:
    """End-of-episode summary. Slowdown of a completed task is
    (completion_time - arrival_time) / workload, where workload is the ideal
    service time at full single-agent rate; mean_slowdown is None when no
    task completed."""

    total_reward: float
    completed: int
    uncompleted: int
    slowdowns: tuple[float, ...]
    mean_slowdown: float | None


class WarehouseEnv:
    """Single episodic environment instance.

    Lifecycle: reset() -> at each decision boundary submit_assignments()
    then tick() exactly decision_interval times -> episode ends when time
    reaches the horizon. One instance is single-writer; independent
    instances may run concurrently.
    """

    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self.plan = config.plan
        self.sentinel = default_sentinel(config.plan)
        # active-task step rewards are constants per slot
        self._slot_rewards = [spec.step_reward for spec in config.task_catalog]
        self._stationary_slots = [
            i for i, s in enumerate(config.task_catalog) if s.stationary
        ]
        self._nonstationary_slots = [
            i for i, s in enumerate(config.task_catalog) if not s.stationary
        ]
        self._started = False

    # -- lifecycle ---------------------------------------------------------

    def reset(self) -> list[np.ndarray]:
        """Start a fresh episode; returns the first per-agent observations."""
        self.rng = np.random.default_rng(self.config.seed)
        self.time = 0
        self.tasks: list[TaskInstance | None] = [None] * self.config.n_slots
        self.agents: list[AgentState] = []
        self.completed: list[TaskInstance] = []
        self.cumulative_reward = 0.0
        self._pending_penalty = 0.0
        self._flags: tuple[bool, ...] = tuple(False for _ in self.config.agents)
        self._next_decision = 0
        self._started = True
        free = self.plan.free_cells
        for i, spec in enumerate(self.config.agents):
            loc = spec.spawn
            if loc is None:
                loc = free[int(self.rng.integers(len(free)))]
            self.agents.append(AgentState(id=i, location=loc, skills=spec.skills))
        # stationary tasks pre-spawn with full workload
        for slot in self._stationary_slots:
            spec = self.config.task_catalog[slot]
            self.tasks[slot] = TaskInstance(
                slot=slot,
                spec=spec,
                location=spec.location,
                remaining_work=spec.workload,
                arrival_time=0,
            )
        return self.observe()

    @property
    def done(self) -> bool:
        return self._started and self.time >= self.config.horizon

    def submit_assignments(self, actions) -> tuple[bool, ...]:
        """Fix each agent's schedule for the next decision interval.

        An action is either None (Stay) or a slot index. Targeting an empty
        slot is illegal: the agent is kept stationary, its flag is raised,
        and the illegal-action penalty is charged once to the interval's
        shared reward. Targeting an occupied slot is always accepted, even
        without the skill (the trip is simply wasted).
        """
        if not self._started:
            raise ProtocolError("reset() must be called before submitting assignments")
        if self.done:
            raise ProtocolError("episode is done")
        if self.time != self._next_decision:
            raise ProtocolError(
                f"assignments may only be submitted at decision boundaries "
                f"(time {self.time}, next boundary {self._next_decision})"
            )
        actions = list(actions)
        if len(actions) != len(self.agents):
            raise ProtocolError(
                f"expected {len(self.agents)} actions, got {len(actions)}"
            )
        flags = []
        for agent, action in zip(self.agents, actions):
            if action is None:
                agent.assignment = None
                flags.append(False)
                continue
            slot = int(action)
            if not 0 <= slot < self.config.n_slots:
                raise ProtocolError(f"slot index {slot} out of range")
            if self.tasks[slot] is None:
                agent.assignment = None
                flags.append(True)
                self._pending_penalty += self.config.illegal_action_penalty
            else:
                agent.assignment = slot
                flags.append(False)
        self._flags = tuple(flags)
        self._next_decision = self.time + self.config.decision_interval
        return self._flags

    def tick(self) -> StepReport:
        """Advance one time-step: arrivals, movement, work, completion, reward."""
        if not self._started:
            raise ProtocolError("reset() must be called before ticking")
        if self.done:
            raise ProtocolError("tick() after episode end")
        if self.time == self._next_decision:
            raise ProtocolError(f"decision required at time {self.time} before ticking")

        # (1) arrivals: stationary slots respawn immediately; at most one
        # non-stationary spawn per tick with the configured probability.
        for slot in self._stationary_slots:
            if self.tasks[slot] is None:
                spec = self.config.task_catalog[slot]
                self.tasks[slot] = TaskInstance(
                    slot=slot,
                    spec=spec,
                    location=spec.location,
                    remaining_work=spec.workload,
                    arrival_time=self.time,
                )
        c = self.config.arrival_probability
        if c > 0.0 and self._nonstationary_slots:
            empty = [s for s in self._nonstationary_slots if self.tasks[s] is None]
            if empty and self.rng.random() < c:
                occupied = {t.location for t in self.tasks if t is not None}
                candidates = [cell for cell in self.plan.free_cells if cell not in occupied]
                if candidates:
                    loc = candidates[int(self.rng.integers(len(candidates)))]
                    slot = empty[0]
                    spec = self.config.task_catalog[slot]
                    self.tasks[slot] = TaskInstance(
                        slot=slot,
                        spec=spec,
                        location=loc,
                        remaining_work=spec.workload,
                        arrival_time=self.time,
                    )

        # (2) movement: one step along a fresh A* path toward the assigned task
        for agent in self.agents:
            slot = agent.assignment
            if slot is None:
                continue
            task = self.tasks[slot]
            if task is None or agent.location == task.location:
                continue
            path = astar(self.plan, agent.location, task.location)
            if path.reachable:
                agent.location = path.steps[0]

        # (3) work: contributors counted in ascending agent id, clipped at capacity
        decrements: dict[int, int] = {}
        for slot, task in enumerate(self.tasks):
            if task is None:
                continue
            contributors = 0
            for agent in self.agents:
                if can_contribute(agent, task, contributors):
                    contributors += 1
            if contributors:
                dec = min(contributors, task.spec.capacity, task.remaining_work)
                task.remaining_work -= dec
                decrements[slot] = dec

        # (4) completion
        completed_now = []
        for slot, task in enumerate(self.tasks):
            if task is not None and task.remaining_work == 0:
                task.completion_time = self.time + 1  # end of this tick
                self.completed.append(task)
                self.tasks[slot] = None
                completed_now.append(slot)

        # (5) reward: every still-active task emits its per-step reward;
        # penalties from this interval's decision land on its first tick.
        reward = self._pending_penalty
        self._pending_penalty = 0.0
        for slot, task in enumerate(self.tasks):
            if task is not None:
                reward += self._slot_rewards[slot]
        self.cumulative_reward += reward

        self.time += 1
        done = self.time >= self.config.horizon
        report = StepReport(
            time=self.time - 1,
            shared_reward=reward,
            illegal_flags=self._flags,
            completed_slots=tuple(completed_now),
            done=done,
        )
        if not done and self.time == self._next_decision:
            report.observations = self.observe()
        return report

    # -- views ---------------------------------------------------------------

    def observe(self) -> list[np.ndarray]:
        """Per-agent N_T x 2 observation: column 0 is the A* distance to each
        slot's task (sentinel when empty or unreachable), column 1 the
        remaining work (0 when empty). Never includes other agents' rows."""
        targets = [t.location if t is not None else None for t in self.tasks]
        work = [t.remaining_work if t is not None else 0 for t in self.tasks]
        memo = DistanceMemo(self.plan)
        out = []
        for agent in self.agents:
            dists = distance_row(self.plan, agent.location, targets, self.sentinel, memo)
            obs = np.empty((self.config.n_slots, 2), dtype=np.int64)
            obs[:, 0] = dists
            obs[:, 1] = work
            out.append(obs)
        return out

    def full_state_matrix(self) -> np.ndarray:
        """(N_A+1) x N_T matrix: one distance row per agent plus the shared
        remaining-work row. For logging and centralized analysis only."""
        n_slots = self.config.n_slots
        mat = np.zeros((len(self.agents) + 1, n_slots), dtype=np.int64)
        targets = [t.location if t is not None else None for t in self.tasks]
        memo = DistanceMemo(self.plan)
        for i, agent in enumerate(self.agents):
            mat[i] = distance_row(self.plan, agent.location, targets, self.sentinel, memo)
        mat[len(self.agents)] = [t.remaining_work if t is not None else 0 for t in self.tasks]
        return mat

    def episode_metrics(self) -> Metrics:
        if not self.done:
            raise ProtocolError("episode_metrics requires a finished episode")
        slowdowns = tuple(
            (t.completion_time - t.arrival_time) / t.spec.workload for t in self.completed
        )
        mean = float(np.mean(slowdowns)) if slowdowns else None
        return Metrics(
            total_reward=self.cumulative_reward,
            completed=len(self.completed),
            uncompleted=sum(1 for t in self.tasks if t is not None),
            slowdowns=slowdowns,
            mean_slowdown=mean,
        )
