"""Line-delimited JSON protocol server exposing the engine over stdio.

External RL frameworks drive the engine as a child process: one request
line in, exactly one reply line out. A step is decision-granular (submit a
schedule, advance a full decision interval). Protocol version 1.

Request kinds and replies:
  hello -> hello      protocol negotiation
  reset -> obs        start an episode from a full env config
  act   -> report     one decision interval (reward summed over its ticks)
  close -> close      shut down the server loop
Any failure produces an error reply; the session stays usable afterwards.
"""

from __future__ import annotations

import json
import sys

from . import __version__
from .engine import EnvConfig, WarehouseEnv
from .rollout import run_interval
from .trace import TraceWriter

PROTOCOL_VERSION = 1


def _obs_payload(observations) -> list | None:
    if observations is None:
        return None
    return [obs.tolist() for obs in observations]


class EngineSession:
    """One environment lifecycle driven by wire messages."""

    def __init__(self):
        self.env: WarehouseEnv | None = None
        self.writer: TraceWriter | None = None

    def handle(self, msg: dict) -> dict:
        try:
            kind = msg.get("kind")
            if msg.get("v") != PROTOCOL_VERSION:
                return self._error(f"unsupported protocol version {msg.get('v')!r}")
            if kind == "hello":
                return {
                    "v": PROTOCOL_VERSION,
                    "kind": "hello",
                    "protocol": PROTOCOL_VERSION,
                    "engine": f"wareflow/{__version__}",
                }
            if kind == "reset":
                return self._reset(msg)
            if kind == "act":
                return self._act(msg)
            if kind == "close":
                self._flush()
                return {"v": PROTOCOL_VERSION, "kind": "close"}
            return self._error(f"unknown message kind {kind!r}")
        except Exception as exc:  # every request gets exactly one reply
            return self._error(f"{type(exc).__name__}: {exc}")

    def _reset(self, msg: dict) -> dict:
        config = EnvConfig.from_dict(msg["config"])
        config.validate()
        self.env = WarehouseEnv(config)
        observations = self.env.reset()
        self.writer = TraceWriter(config, msg["trace"]) if msg.get("trace") else None
        return {
            "v": PROTOCOL_VERSION,
            "kind": "obs",
            "t": self.env.time,
            "observations": _obs_payload(observations),
        }

    def _act(self, msg: dict) -> dict:
        if self.env is None:
            return self._error("act before reset")
        if self.env.done:
            return self._error("act after episode end")
        actions = [None if a is None else int(a) for a in msg["actions"]]
        report = run_interval(self.env, actions, self.writer)
        if report.done:
            self._flush()
        return {
            "v": PROTOCOL_VERSION,
            "kind": "report",
            "t": self.env.time,
            "reward": report.reward,
            "done": report.done,
            "flags": list(report.illegal_flags),
            "completed": list(report.completed_slots),
            "observations": _obs_payload(report.observations),
        }

    def _flush(self) -> None:
        if self.writer is not None:
            self.writer.flush()

    @staticmethod
    def _error(message: str) -> dict:
        return {"v": PROTOCOL_VERSION, "kind": "error", "message": message}


def serve_stdio(stdin=None, stdout=None) -> int:
    """Run the request-reply loop until close or EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    session = EngineSession()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            reply = session._error(f"invalid JSON: {exc}")
        else:
            reply = session.handle(msg)
        stdout.write(json.dumps(reply, sort_keys=True, separators=(",", ":")) + "\n")
        stdout.flush()
        if reply.get("kind") == "close":
            return 0
    session._flush()
    return 0
