import math

import pytest
from hypothesis import given, strategies as st

from wareflow.domain import (
    AgentState,
    DomainError,
    TaskInstance,
    TaskSpec,
    can_contribute,
    priority_dominates,
    task_step_reward,
)


def test_reward_values():
    # direct high-precision evaluation of the closed form
    assert task_step_reward(1.0, 1) == pytest.approx(-math.exp(-2.0), rel=1e-12)
    assert task_step_reward(1.0, 2) == pytest.approx(-math.exp(-3.0), rel=1e-12)
    assert task_step_reward(1e6, 1) == pytest.approx(-math.exp(-(1.0 + 1e-6)), rel=1e-12)


def test_reward_large_r_limit():
    # approaches -e^{-1} from above (more negative than the limit never happens)
    assert -math.exp(-1.0) < task_step_reward(1e9, 1) < -math.exp(-1.0) * (1 - 1e-6)


def test_reward_domain_errors():
    with pytest.raises(DomainError):
        task_step_reward(0.5, 1)
    with pytest.raises(DomainError):
        task_step_reward(1.0, 0)


def test_reward_range_bound():
    # exponent p + 1/r lies in (p, p+1], so R lies in (-e^{-p}, -e^{-(p+1)}];
    # globally R is within (-e^{-1}, 0), the r -> inf, p = 1 limit
    assert task_step_reward(1.0, 1) == pytest.approx(-math.exp(-2.0))
    for r in (1.0, 2.0, 100.0, 1e9):
        for p in (1, 2, 5):
            v = task_step_reward(r, p)
            assert -math.exp(-1.0) < v < 0.0
            assert -math.exp(-p) < v <= -math.exp(-(p + 1))


@given(
    st.floats(1.0, 1e6),
    st.floats(1.0, 1e6),
    st.integers(1, 10),
)
def test_reward_monotonic_in_r(r1, r2, p):
    if r1 == r2:
        return
    lo, hi = sorted((r1, r2))
    # strictly decreasing (away from 0) as r grows
    assert task_step_reward(hi, p) < task_step_reward(lo, p)


@given(st.floats(1.0, 1e6), st.integers(1, 9))
def test_reward_monotonic_in_p(r, p):
    # strictly increasing toward 0 as p grows
    assert task_step_reward(r, p) < task_step_reward(r, p + 1)


def test_dominance_adjacent_boundary():
    w = priority_dominates(1, 2)
    assert w
    # min magnitude at p=1 equals the (unattained) sup at p=2
    assert w.floor_hi == pytest.approx(math.exp(-2.0))
    assert w.ceiling_lo == pytest.approx(math.exp(-2.0))
    assert abs(task_step_reward(1.0, 1)) > abs(task_step_reward(1e9, 2))


def test_dominance_direct_example():
    assert abs(task_step_reward(3.0, 2)) > abs(task_step_reward(3.0, 5))
    assert priority_dominates(2, 5)


def test_dominance_precondition():
    with pytest.raises(DomainError):
        priority_dominates(1, 1)
    with pytest.raises(DomainError):
        priority_dominates(3, 2)


@given(
    st.integers(1, 9),
    st.floats(1.0, 1e6),
    st.floats(1.0, 1e6),
)
def test_dominance_randomized(p, r_hi, r_lo):
    assert priority_dominates(p, p + 1)
    assert abs(task_step_reward(r_hi, p)) > abs(task_step_reward(r_lo, p + 1))


def _setup(assigned=True, skilled=True, co_located=True, work=5):
    spec = TaskSpec(task_type=0, workload=10, capacity=5)
    task = TaskInstance(slot=2, spec=spec, location=(1, 1), remaining_work=work, arrival_time=0)
    agent = AgentState(
        id=0,
        location=(1, 1) if co_located else (0, 0),
        skills=frozenset({0}) if skilled else frozenset({1}),
        assignment=2 if assigned else None,
    )
    return agent, task


def test_can_contribute_all_conditions_met():
    agent, task = _setup()
    assert can_contribute(agent, task, 0)


def test_can_contribute_unskilled_wasted_trip():
    agent, task = _setup(skilled=False)
    assert not can_contribute(agent, task, 0)


def test_can_contribute_at_capacity():
    agent, task = _setup()
    assert not can_contribute(agent, task, 5)


def test_can_contribute_monotone_single_flips():
    # flipping any single satisfied condition flips the result to false
    assert can_contribute(*_setup(), 0)
    assert not can_contribute(*_setup(assigned=False), 0)
    assert not can_contribute(*_setup(skilled=False), 0)
    assert not can_contribute(*_setup(co_located=False), 0)
    assert not can_contribute(*_setup(work=0), 0)
    agent, task = _setup()
    assert not can_contribute(agent, task, task.spec.capacity)


def test_task_spec_validation():
    with pytest.raises(DomainError):
        TaskSpec(task_type=0, workload=0, capacity=1)
    with pytest.raises(DomainError):
        TaskSpec(task_type=0, workload=1, capacity=0)
    with pytest.raises(DomainError):
        TaskSpec(task_type=0, workload=1, capacity=1, priority=0)
    with pytest.raises(DomainError):
        TaskSpec(task_type=0, workload=1, capacity=1, reward_scale=0.5)
