import math

import numpy as np
import pytest

from wareflow.domain import TaskSpec
from wareflow.engine import (
    AgentSpec,
    ConfigError,
    EnvConfig,
    ProtocolError,
    WarehouseEnv,
)
from wareflow.floorplan import make_corridor, make_open_grid, parse_floorplan
from wareflow.pathing import default_sentinel
from wareflow.rollout import run_interval

E2 = math.exp(-2.0)


def basic_config(**overrides) -> EnvConfig:
    defaults = dict(
        plan=make_open_grid(5, 5),
        task_catalog=(
            TaskSpec(task_type=0, workload=10, capacity=1),
            TaskSpec(task_type=1, workload=10, capacity=1),
        ),
        agents=(AgentSpec(skills=frozenset({0, 1})),),
        arrival_probability=0.5,
        decision_interval=10,
        horizon=50,
        seed=123,
    )
    defaults.update(overrides)
    return EnvConfig(**defaults)


def drive(env, policy):
    """Run a whole episode; policy(env) -> actions at each boundary."""
    reports = []
    while not env.done:
        actions = policy(env)
        env.submit_assignments(actions)
        for _ in range(env.config.decision_interval):
            reports.append(env.tick())
    return reports


def stay_policy(env):
    return [None] * len(env.agents)


# -- validation and lifecycle -------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        basic_config(horizon=55).validate()  # not a multiple of K
    with pytest.raises(ConfigError):
        basic_config(arrival_probability=1.5).validate()
    with pytest.raises(ConfigError):
        basic_config(task_catalog=()).validate()
    with pytest.raises(ConfigError):
        basic_config(illegal_action_penalty=0.5).validate()


def test_fixed_spawn_on_wall_rejected():
    plan = parse_floorplan(".#\n..")
    cfg = basic_config(plan=plan, agents=(AgentSpec(skills=frozenset({0}), spawn=(1, 0)),))
    with pytest.raises(ConfigError):
        WarehouseEnv(cfg)


def test_stationary_task_location_on_wall_rejected():
    plan = parse_floorplan(".#\n..")
    cfg = basic_config(
        plan=plan,
        task_catalog=(TaskSpec(task_type=0, workload=5, capacity=1, location=(1, 0)),),
    )
    with pytest.raises(ConfigError):
        WarehouseEnv(cfg)


def test_reset_determinism():
    cfg = basic_config()
    env1, env2 = WarehouseEnv(cfg), WarehouseEnv(cfg)
    obs1, obs2 = env1.reset(), env2.reset()
    for a, b in zip(obs1, obs2):
        assert np.array_equal(a, b)
    assert [a.location for a in env1.agents] == [a.location for a in env2.agents]


def test_episode_determinism_bit_exact():
    cfg = basic_config(horizon=100)
    def policy(env):
        # deterministic function of state: target lowest occupied slot
        occ = [i for i, t in enumerate(env.tasks) if t is not None]
        return [occ[0] if occ else None for _ in env.agents]
    env1, env2 = WarehouseEnv(cfg), WarehouseEnv(cfg)
    env1.reset(), env2.reset()
    r1, r2 = drive(env1, policy), drive(env2, policy)
    assert len(r1) == len(r2) == 100
    for a, b in zip(r1, r2):
        assert a.shared_reward == b.shared_reward
        assert a.illegal_flags == b.illegal_flags
        assert a.completed_slots == b.completed_slots
    assert env1.cumulative_reward == env2.cumulative_reward
    assert [a.location for a in env1.agents] == [a.location for a in env2.agents]


def test_stationary_task_prespawns_at_reset():
    cfg = basic_config(
        task_catalog=(TaskSpec(task_type=0, workload=7, capacity=1, location=(2, 2)),),
    )
    env = WarehouseEnv(cfg)
    env.reset()
    task = env.tasks[0]
    assert task is not None
    assert task.location == (2, 2)
    assert task.remaining_work == 7
    assert task.arrival_time == 0


def test_empty_agent_list_valid():
    cfg = basic_config(
        agents=(),
        task_catalog=(TaskSpec(task_type=0, workload=5, capacity=1, location=(0, 0)),),
        arrival_probability=0.0,
        horizon=10,
    )
    env = WarehouseEnv(cfg)
    env.reset()
    env.submit_assignments([])
    total = 0.0
    for _ in range(10):
        total += env.tick().shared_reward
    # the stationary task is never worked, so it emits every tick
    assert total == pytest.approx(-10 * E2)
    assert env.done


# -- assignments and illegal actions ------------------------------------------

def test_illegal_assignment_flags_and_penalty_once():
    cfg = basic_config(arrival_probability=0.0, illegal_action_penalty=-2.5)
    env = WarehouseEnv(cfg)
    env.reset()
    flags = env.submit_assignments([1])  # slot 1 empty: illegal
    assert flags == (True,)
    assert env.agents[0].assignment is None  # kept stationary
    rewards = [env.tick().shared_reward for _ in range(10)]
    # penalty charged exactly once, on the interval's first tick
    assert rewards[0] == pytest.approx(-2.5)
    assert all(r == 0.0 for r in rewards[1:])


def test_stay_always_legal():
    env = WarehouseEnv(basic_config())
    env.reset()
    assert env.submit_assignments([None]) == (False,)


def test_unskilled_assignment_accepted():
    cfg = basic_config(
        task_catalog=(TaskSpec(task_type=5, workload=5, capacity=1, location=(0, 0)),),
        agents=(AgentSpec(skills=frozenset({0}), spawn=(0, 0)),),  # lacks type 5
        arrival_probability=0.0,
        horizon=10,
    )
    env = WarehouseEnv(cfg)
    env.reset()
    flags = env.submit_assignments([0])
    assert flags == (False,)
    assert env.agents[0].assignment == 0
    for _ in range(10):
        env.tick()
    # wasted trip: co-located the whole time but never contributed
    assert env.tasks[0].remaining_work == 5


def test_protocol_errors():
    env = WarehouseEnv(basic_config())
    with pytest.raises(ProtocolError):
        env.tick()  # before reset
    env.reset()
    with pytest.raises(ProtocolError):
        env.tick()  # decision required first
    with pytest.raises(ProtocolError):
        env.submit_assignments([7])  # slot out of range
    env.submit_assignments([None])
    with pytest.raises(ProtocolError):
        env.submit_assignments([None])  # mid-interval
    with pytest.raises(ProtocolError):
        env.episode_metrics()  # not done
    for _ in range(10):
        env.tick()
    while not env.done:
        env.submit_assignments([None])
        for _ in range(10):
            env.tick()
    with pytest.raises(ProtocolError):
        env.tick()
    with pytest.raises(ProtocolError):
        env.submit_assignments([None])


# -- tick mechanics ------------------------------------------------------------

def test_no_tasks_zero_reward():
    env = WarehouseEnv(basic_config(arrival_probability=0.0))
    env.reset()
    env.submit_assignments([None])
    assert env.tick().shared_reward == 0.0


def test_single_task_step_reward():
    cfg = basic_config(
        task_catalog=(TaskSpec(task_type=0, workload=5, capacity=1, location=(4, 4)),),
        agents=(),
        arrival_probability=0.0,
    )
    env = WarehouseEnv(cfg)
    env.reset()
    env.submit_assignments([])
    assert env.tick().shared_reward == pytest.approx(-E2)


def test_capacity_clips_parallel_work():
    # workload 3, capacity 1, two skilled co-located assigned agents:
    # completes after 3 ticks, not 2
    cfg = basic_config(
        task_catalog=(TaskSpec(task_type=0, workload=3, capacity=1, location=(1, 1)),),
        agents=(
            AgentSpec(skills=frozenset({0}), spawn=(1, 1)),
            AgentSpec(skills=frozenset({0}), spawn=(1, 1)),
        ),
        arrival_probability=0.0,
        horizon=10,
    )
    env = WarehouseEnv(cfg)
    env.reset()
    env.submit_assignments([0, 0])
    completed_at = None
    for k in range(10):
        rep = env.tick()
        if rep.completed_slots:
            completed_at = k
            break
    assert completed_at == 2  # ticks 0,1,2 each decrement 1


def test_work_conservation():
    cfg = basic_config(horizon=200, seed=9)
    env = WarehouseEnv(cfg)
    env.reset()
    # per-task running decrement totals, keyed by object identity; tasks that
    # arrive mid-tick may be worked the same tick, so new ids start from the
    # full workload
    last_remaining: dict[int, int] = {}
    totals: dict[int, int] = {}

    def policy(env):
        occ = [i for i, t in enumerate(env.tasks) if t is not None]
        return [occ[0] if occ else None for _ in env.agents]

    while not env.done:
        env.submit_assignments(policy(env))
        for _ in range(env.config.decision_interval):
            env.tick()
            for task in env.tasks:
                if task is None:
                    continue
                key = id(task)
                prev = last_remaining.get(key, task.spec.workload)
                dec = prev - task.remaining_work
                assert 0 <= dec <= task.spec.capacity  # capacity bound, always
                totals[key] = totals.get(key, 0) + dec
                last_remaining[key] = task.remaining_work
            for task in env.completed:
                key = id(task)
                if key in last_remaining and last_remaining[key] > 0:
                    dec = last_remaining[key]
                    assert 0 <= dec <= task.spec.capacity
                    totals[key] = totals.get(key, 0) + dec
                    last_remaining[key] = 0
                elif key not in last_remaining:
                    # arrived and fully completed without an observation point
                    totals[key] = task.spec.workload
                    last_remaining[key] = 0
    assert env.completed
    for task in env.completed:
        assert totals[id(task)] == task.spec.workload


def test_no_preemption_within_interval():
    cfg = basic_config(horizon=100, seed=5)
    env = WarehouseEnv(cfg)
    env.reset()
    while not env.done:
        occ = [i for i, t in enumerate(env.tasks) if t is not None]
        env.submit_assignments([occ[-1] if occ else None])
        frozen = [a.assignment for a in env.agents]
        for _ in range(env.config.decision_interval):
            env.tick()
            assert [a.assignment for a in env.agents] == frozen


def test_movement_legality():
    cfg = basic_config(plan=make_corridor(4, 4), horizon=200, seed=17)
    env = WarehouseEnv(cfg)
    env.reset()
    plan = env.plan
    while not env.done:
        occ = [i for i, t in enumerate(env.tasks) if t is not None]
        env.submit_assignments([occ[0] if occ else None])
        for _ in range(env.config.decision_interval):
            before = [a.location for a in env.agents]
            env.tick()
            for prev, agent in zip(before, env.agents):
                dist = abs(prev[0] - agent.location[0]) + abs(prev[1] - agent.location[1])
                assert dist in (0, 1)
                assert plan.is_free(*agent.location)


def test_agents_move_toward_assigned_task():
    cfg = basic_config(
        task_catalog=(TaskSpec(task_type=0, workload=20, capacity=1, location=(4, 0)),),
        agents=(AgentSpec(skills=frozenset({0}), spawn=(0, 0)),),
        arrival_probability=0.0,
        horizon=10,
    )
    env = WarehouseEnv(cfg)
    env.reset()
    env.submit_assignments([0])
    for _ in range(4):
        env.tick()
    assert env.agents[0].location == (4, 0)
    # arrived during tick 3's movement phase, so tick 3's work phase counted
    assert env.tasks[0].remaining_work == 19
    env.tick()
    assert env.tasks[0].remaining_work == 18


def test_arrivals_only_fill_empty_nonstationary_slots():
    cfg = basic_config(arrival_probability=1.0, horizon=30, seed=3)
    env = WarehouseEnv(cfg)
    env.reset()
    env.submit_assignments([None])
    env.tick()
    # exactly one task spawned (one arrival per tick)
    assert sum(t is not None for t in env.tasks) == 1
    env.tick()
    assert sum(t is not None for t in env.tasks) == 2
    env.tick()
    # both slots full: arrival suppressed
    assert sum(t is not None for t in env.tasks) == 2


def test_c_zero_no_tasks_ever():
    cfg = basic_config(arrival_probability=0.0, horizon=50, illegal_action_penalty=-3.0)
    env = WarehouseEnv(cfg)
    env.reset()
    penalties = 0
    while not env.done:
        env.submit_assignments([0])  # always illegal: slot never fills
        penalties += 1
        for _ in range(10):
            env.tick()
    assert all(t is None for t in env.tasks)
    assert not env.completed
    assert env.cumulative_reward == pytest.approx(-3.0 * penalties)


# -- observations --------------------------------------------------------------

def test_observation_example():
    cfg = basic_config(
        task_catalog=(
            TaskSpec(task_type=0, workload=10, capacity=1, location=(1, 1)),
            TaskSpec(task_type=1, workload=10, capacity=1),
        ),
        agents=(AgentSpec(skills=frozenset({0, 1}), spawn=(0, 0)),),
        arrival_probability=0.0,
    )
    env = WarehouseEnv(cfg)
    obs = env.reset()
    sentinel = default_sentinel(cfg.plan)
    assert obs[0].shape == (2, 2)
    assert obs[0][0].tolist() == [2, 10]
    assert obs[0][1].tolist() == [sentinel, 0]


def test_observation_shared_work_column():
    cfg = basic_config(
        task_catalog=(TaskSpec(task_type=0, workload=10, capacity=1, location=(2, 2)),),
        agents=(
            AgentSpec(skills=frozenset({0}), spawn=(0, 0)),
            AgentSpec(skills=frozenset({0}), spawn=(4, 4)),
        ),
        arrival_probability=0.0,
    )
    env = WarehouseEnv(cfg)
    obs = env.reset()
    assert obs[0][0, 0] == obs[1][0, 0] == 4  # symmetric positions here
    assert np.array_equal(obs[0][:, 1], obs[1][:, 1])


def test_observation_excludes_other_agents():
    base = basic_config(
        task_catalog=(TaskSpec(task_type=0, workload=10, capacity=1, location=(2, 2)),),
        agents=(
            AgentSpec(skills=frozenset({0}), spawn=(0, 0)),
            AgentSpec(skills=frozenset({0}), spawn=(4, 4)),
        ),
        arrival_probability=0.0,
    )
    moved = basic_config(
        task_catalog=base.task_catalog,
        agents=(base.agents[0], AgentSpec(skills=frozenset({0}), spawn=(1, 3))),
        arrival_probability=0.0,
    )
    obs_a = WarehouseEnv(base).reset()
    obs_b = WarehouseEnv(moved).reset()
    # agent 0's observation is independent of where agent 1 stands
    assert np.array_equal(obs_a[0], obs_b[0])


def test_observation_shape_every_decision():
    cfg = basic_config(horizon=60, seed=2)
    env = WarehouseEnv(cfg)
    obs = env.reset()
    assert all(o.shape == (cfg.n_slots, 2) for o in obs)
    while not env.done:
        env.submit_assignments([None] * len(env.agents))
        for _ in range(10):
            rep = env.tick()
        if not rep.done:
            assert rep.observations is not None
            assert all(o.shape == (cfg.n_slots, 2) for o in rep.observations)


def test_full_state_matrix():
    cfg = basic_config(
        task_catalog=(
            TaskSpec(task_type=0, workload=10, capacity=1, location=(1, 0)),
            TaskSpec(task_type=1, workload=4, capacity=1, location=(3, 3)),
            TaskSpec(task_type=2, workload=6, capacity=1, location=(0, 4)),
        ),
        agents=(
            AgentSpec(skills=frozenset({0}), spawn=(0, 0)),
            AgentSpec(skills=frozenset({1}), spawn=(2, 2)),
        ),
        arrival_probability=0.0,
    )
    env = WarehouseEnv(cfg)
    obs = env.reset()
    mat = env.full_state_matrix()
    assert mat.shape == (3, 3)  # (N_A + 1) x N_T
    for i in range(2):
        assert np.array_equal(mat[i], obs[i][:, 0])
    assert mat[2].tolist() == [10, 4, 6]


def test_full_state_matrix_empty_slots_zero_work():
    env = WarehouseEnv(basic_config(arrival_probability=0.0))
    env.reset()
    mat = env.full_state_matrix()
    assert mat[-1].tolist() == [0, 0]


# -- metrics and accounting ----------------------------------------------------

def test_slowdown_hand_trace():
    # task present from t=0 at distance 16, workload 10: the agent reaches it
    # during tick 15 and works ticks 15..24, so it completes at t=25
    cfg = EnvConfig(
        plan=make_open_grid(17, 1),
        task_catalog=(TaskSpec(task_type=0, workload=10, capacity=1, location=(16, 0)),),
        agents=(AgentSpec(skills=frozenset({0}), spawn=(0, 0)),),
        arrival_probability=0.0,
        decision_interval=10,
        horizon=30,
        seed=0,
    )
    env = WarehouseEnv(cfg)
    env.reset()
    while not env.done:
        env.submit_assignments([0 if env.tasks[0] is not None else None])
        for _ in range(10):
            env.tick()
    completed = env.completed[0]
    assert completed.arrival_time == 0
    assert completed.completion_time == 25
    metrics = env.episode_metrics()
    assert metrics.slowdowns[0] == pytest.approx(2.5)


def test_slowdown_can_beat_one_with_capacity():
    # capacity 5, five co-located agents: workload 10 done in 2 ticks
    cfg = basic_config(
        task_catalog=(TaskSpec(task_type=0, workload=10, capacity=5, location=(0, 0)),),
        agents=tuple(AgentSpec(skills=frozenset({0}), spawn=(0, 0)) for _ in range(5)),
        arrival_probability=0.0,
        horizon=10,
    )
    env = WarehouseEnv(cfg)
    env.reset()
    env.submit_assignments([0] * 5)
    for _ in range(10):
        env.tick()
    # stationary task respawns; first completion is in completed list
    first = env.completed[0]
    assert (first.completion_time - first.arrival_time) / first.spec.workload == pytest.approx(0.2)


def test_metrics_no_completions():
    env = WarehouseEnv(basic_config(arrival_probability=0.0, horizon=10))
    env.reset()
    env.submit_assignments([None])
    for _ in range(10):
        env.tick()
    metrics = env.episode_metrics()
    assert metrics.mean_slowdown is None
    assert metrics.completed == 0


def test_reward_accounting_replay():
    cfg = basic_config(horizon=100, seed=21, illegal_action_penalty=-1.0)
    env = WarehouseEnv(cfg)
    env.reset()
    active_ticks = 0
    penalties = 0
    step_sum = 0.0
    while not env.done:
        actions = [1]  # sometimes illegal (slot 1 may be empty)
        flags = env.submit_assignments(actions)
        penalties += sum(flags)
        for _ in range(env.config.decision_interval):
            rep = env.tick()
            step_sum += rep.shared_reward
            active_ticks += sum(t is not None for t in env.tasks)
    expected = -active_ticks * E2 - penalties * 1.0
    assert env.cumulative_reward == pytest.approx(step_sum, abs=1e-12)
    assert env.cumulative_reward == pytest.approx(expected, rel=1e-9)
