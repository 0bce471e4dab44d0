"""Episode drivers shared by schedulers, the learner, and the harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import EnvConfig, Metrics, WarehouseEnv
from .trace import TraceWriter


def derive_seed(*keys: int) -> int:
    """Stable derivation of independent sub-seeds from integer keys."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


@dataclass
class IntervalReport:
    """One decision interval as seen by a scheduler or policy: the summed
    shared reward, the decision's illegal flags, slots completed during the
    interval, and the observations for the next decision (None when done)."""

    reward: float
    illegal_flags: tuple[bool, ...]
    completed_slots: tuple[int, ...]
    done: bool
    observations: list[np.ndarray] | None


def run_interval(env: WarehouseEnv, actions, writer: TraceWriter | None = None) -> IntervalReport:
    """Submit one decision and advance a full interval of ticks."""
    flags = env.submit_assignments(actions)
    reward = 0.0
    completed: list[int] = []
    observations = None
    done = False
    for k in range(env.config.decision_interval):
        report = env.tick()
        reward += report.shared_reward
        completed.extend(report.completed_slots)
        done = report.done
        observations = report.observations
        if writer is not None:
            writer.record_tick(env, report, actions if k == 0 else None)
    return IntervalReport(
        reward=reward,
        illegal_flags=flags,
        completed_slots=tuple(completed),
        done=done,
        observations=observations,
    )


@dataclass
class EpisodeResult:
    total_reward: float
    metrics: Metrics
    illegal_actions: int
    env_seed: int


def run_episode(
    config: EnvConfig,
    scheduler,
    trace_path=None,
) -> EpisodeResult:
    """Run one full episode with a scheduler deciding at every boundary."""
    env = WarehouseEnv(config)
    env.reset()
    writer = TraceWriter(config, trace_path) if trace_path is not None else None
    illegal = 0
    while not env.done:
        actions = scheduler.decide(env.plan, env.agents, env.tasks)
        report = run_interval(env, actions, writer)
        illegal += sum(report.illegal_flags)
    if writer is not None:
        writer.flush()
    return EpisodeResult(
        total_reward=env.cumulative_reward,
        metrics=env.episode_metrics(),
        illegal_actions=illegal,
        env_seed=config.seed,
    )
