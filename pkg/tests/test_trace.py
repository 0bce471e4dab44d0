import json

import pytest

from wareflow.harness import corridor_env, make_scheduler_factory
from wareflow.rollout import run_episode
from wareflow.trace import TraceError, read_trace, replay, verify_trace


@pytest.fixture()
def traced_episode(tmp_path):
    cfg = corridor_env(n_agents=2, skills_per_agent=2, horizon=100, seed=77)
    path = tmp_path / "episode.jsonl"
    result = run_episode(cfg, make_scheduler_factory("greedy")(0), trace_path=path)
    return cfg, path, result


def test_trace_schema(traced_episode):
    cfg, path, _ = traced_episode
    records = read_trace(path)
    assert records[0]["kind"] == "header"
    assert records[0]["v"] == 1
    assert records[0]["config"]["seed"] == 77
    ticks = [r for r in records[1:]]
    assert len(ticks) == cfg.horizon
    for i, rec in enumerate(ticks):
        assert rec["kind"] == "tick" and rec["v"] == 1
        assert rec["t"] == i
        assert ("actions" in rec) == (i % cfg.decision_interval == 0)
    assert ticks[-1]["done"] is True


def test_replay_bit_exact(traced_episode):
    _, path, result = traced_episode
    total = verify_trace(path)
    assert total == pytest.approx(result.total_reward, abs=1e-9)


def test_replay_exact_float_sum(traced_episode):
    # same summation order as the engine: exactly equal, not just within tolerance
    _, path, result = traced_episode
    assert verify_trace(path) == result.total_reward


def test_tampered_trace_detected(tmp_path, traced_episode):
    _, path, _ = traced_episode
    lines = open(path).readlines()
    rec = json.loads(lines[5])
    rec["agents"][0][0] += 1
    lines[5] = json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n"
    bad = tmp_path / "tampered.jsonl"
    bad.write_text("".join(lines))
    with pytest.raises(TraceError):
        verify_trace(bad)


def test_trace_missing_header():
    with pytest.raises(TraceError):
        replay(['{"kind":"tick","t":0}\n'])


def test_trace_missing_actions(traced_episode):
    _, path, _ = traced_episode
    lines = [l for l in open(path) if '"actions"' not in l]
    with pytest.raises(TraceError, match="actions"):
        replay(lines)
