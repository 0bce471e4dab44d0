"""JSON-lines episode traces: writing, replay, and verification.

A trace is a header record carrying the fully resolved config followed by
one record per tick. Decision ticks additionally carry the submitted
actions, which is enough to replay the episode bit-exactly.
"""

from __future__ import annotations

import json

from .engine import EnvConfig, StepReport, WarehouseEnv

SCHEMA_VERSION = 1


class TraceError(ValueError):
    """Trace file malformed or inconsistent with its own replay."""


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def header_record(config: EnvConfig) -> dict:
    return {"v": SCHEMA_VERSION, "kind": "header", "config": config.to_dict()}


def tick_record(env: WarehouseEnv, report: StepReport, actions=None) -> dict:
    rec = {
        "v": SCHEMA_VERSION,
        "kind": "tick",
        "t": report.time,
        "agents": [list(a.location) for a in env.agents],
        "tasks": [
            [t.slot, t.spec.task_type, t.location[0], t.location[1], t.remaining_work]
            for t in env.tasks
            if t is not None
        ],
        "reward": report.shared_reward,
        "flags": list(report.illegal_flags),
        "completed": list(report.completed_slots),
        "done": report.done,
    }
    if actions is not None:
        rec["actions"] = [a if a is None else int(a) for a in actions]
    return rec


class TraceWriter:
    """Accumulates trace lines; optionally mirrors them to a file."""

    def __init__(self, config: EnvConfig, path=None):
        self.lines: list[str] = [dumps_line(header_record(config))]
        self._path = path

    def record_tick(self, env: WarehouseEnv, report: StepReport, actions=None) -> None:
        self.lines.append(dumps_line(tick_record(env, report, actions)))

    def flush(self) -> None:
        if self._path is not None:
            with open(self._path, "w", encoding="utf-8") as fh:
                fh.writelines(self.lines)

    def text(self) -> str:
        return "".join(self.lines)


def read_trace(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay(lines: list[str]) -> list[str]:
    """Re-run the episode described by trace lines, returning fresh lines.

    The replay uses only the header config and the recorded decision
    actions; everything else is recomputed by the engine.
    """
    records = [json.loads(line) for line in lines if line.strip()]
    if not records or records[0].get("kind") != "header":
        raise TraceError("trace must start with a header record")
    config = EnvConfig.from_dict(records[0]["config"])
    actions_by_time = {
        rec["t"]: [None if a is None else int(a) for a in rec["actions"]]
        for rec in records[1:]
        if rec.get("kind") == "tick" and "actions" in rec
    }
    env = WarehouseEnv(config)
    env.reset()
    writer = TraceWriter(config)
    while not env.done:
        if env.time not in actions_by_time:
            raise TraceError(f"trace missing actions for decision at t={env.time}")
        actions = actions_by_time[env.time]
        env.submit_assignments(actions)
        for k in range(config.decision_interval):
            report = env.tick()
            writer.record_tick(env, report, actions if k == 0 else None)
    return writer.lines


def verify_trace(path) -> float:
    """Replay a trace file and check bit-exact agreement; returns the
    cumulative reward recomputed from the trace records."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    replayed = replay(lines)
    if lines != replayed:
        for i, (a, b) in enumerate(zip(lines, replayed)):
            if a != b:
                raise TraceError(f"replay diverges at line {i}: {a!r} != {b!r}")
        raise TraceError(
            f"replay length mismatch: {len(lines)} recorded vs {len(replayed)} replayed"
        )
    total = 0.0
    for line in lines[1:]:
        total += json.loads(line)["reward"]
    return total
