"""Shared actor-critic policy: a small tanh MLP over the flattened task
observation, with an action head (one logit per slot plus Stay) and a
scalar value head.

Forward and backward passes are written out explicitly in numpy; the
networks are tiny and double precision keeps gradient checks tight.
Observations enter raw (step counts and work units); a fixed input_scale
constant, stored with the parameters, keeps the first layer out of tanh
saturation without tying the policy to any particular floor plan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .pathing import DistanceMemo, default_sentinel, distance_row

WEIGHT_KEYS = ("W0", "b0", "W1", "b1", "Wp", "bp", "Wv", "bv")


class InputError(ValueError):
    """Observation malformed (wrong shape or non-finite entries)."""


class CheckpointError(ValueError):
    """Checkpoint file missing, malformed, or incompatible."""


@dataclass
class PolicyParams:
    n_slots: int
    hidden: tuple[int, int]
    input_scale: float
    weights: dict[str, np.ndarray]

    @property
    def n_actions(self) -> int:
        return self.n_slots + 1  # slots plus Stay (last index)

    @property
    def input_dim(self) -> int:
        return 2 * self.n_slots

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            n_slots=self.n_slots,
            hidden=self.hidden,
            input_scale=self.input_scale,
            weights={k: v.copy() for k, v in self.weights.items()},
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights[k].ravel() for k in WEIGHT_KEYS])

    def n_params(self) -> int:
        return int(sum(self.weights[k].size for k in WEIGHT_KEYS))


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    flip = shape[0] < shape[1]
    q, r = np.linalg.qr(a.T if flip else a)
    q = q * np.sign(np.diag(r))
    return gain * (q.T if flip else q)


def init_params(
    n_slots: int,
    hidden: tuple[int, int] = (64, 64),
    input_scale: float = 1.0 / 64.0,
    seed: int = 0,
) -> PolicyParams:
    """Orthogonal initialization; the action head starts near-uniform."""
    rng = np.random.default_rng(seed)
    d_in = 2 * n_slots
    h0, h1 = hidden
    n_act = n_slots + 1
    weights = {
        "W0": _orthogonal(rng, (d_in, h0), np.sqrt(2.0)),
        "b0": np.zeros(h0),
        "W1": _orthogonal(rng, (h0, h1), np.sqrt(2.0)),
        "b1": np.zeros(h1),
        "Wp": _orthogonal(rng, (h1, n_act), 0.01),
        "bp": np.zeros(n_act),
        "Wv": _orthogonal(rng, (h1, 1), 1.0),
        "bv": np.zeros(1),
    }
    return PolicyParams(n_slots=n_slots, hidden=(h0, h1), input_scale=input_scale, weights=weights)


def forward(params: PolicyParams, X: np.ndarray):
    """Batched forward pass. X has shape (B, 2*n_slots).

    Returns (logits, values, cache) where cache feeds backward()."""
    w = params.weights
    Xs = np.asarray(X, dtype=np.float64) * params.input_scale
    h0 = np.tanh(Xs @ w["W0"] + w["b0"])
    h1 = np.tanh(h0 @ w["W1"] + w["b1"])
    logits = h1 @ w["Wp"] + w["bp"]
    values = (h1 @ w["Wv"])[:, 0] + w["bv"][0]
    return logits, values, (Xs, h0, h1)


def backward(params: PolicyParams, cache, dlogits: np.ndarray, dvalues: np.ndarray):
    """Backprop given upstream gradients on logits and values."""
    w = params.weights
    Xs, h0, h1 = cache
    grads: dict[str, np.ndarray] = {}
    grads["Wp"] = h1.T @ dlogits
    grads["bp"] = dlogits.sum(axis=0)
    grads["Wv"] = h1.T @ dvalues[:, None]
    grads["bv"] = np.array([dvalues.sum()])
    dh1 = dlogits @ w["Wp"].T + dvalues[:, None] * w["Wv"][:, 0]
    dz1 = dh1 * (1.0 - h1 * h1)
    grads["W1"] = h0.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    dh0 = dz1 @ w["W1"].T
    dz0 = dh0 * (1.0 - h0 * h0)
    grads["W0"] = Xs.T @ dz0
    grads["b0"] = dz0.sum(axis=0)
    return grads


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _validate_obs(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    arr = np.asarray(obs, dtype=np.float64)
    if arr.shape != (params.n_slots, 2):
        raise InputError(f"expected observation shape ({params.n_slots}, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("observation contains non-finite values")
    return arr.reshape(1, -1)


def policy_act(
    params: PolicyParams,
    obs: np.ndarray,
    rng: np.random.Generator | None = None,
    mode: str = "sample",
) -> tuple[int, float, float]:
    """Select an action for one observation.

    mode "sample" draws from the softmax; "greedy" takes the argmax with
    lowest-index tie-break. Returns (action, log_prob, value); action
    n_slots means Stay. No action masking: picking an empty slot is left to
    the environment to penalize.
    """
    x = _validate_obs(params, obs)
    logits, values, _ = forward(params, x)
    logp = log_softmax(logits[0])
    if mode == "greedy":
        action = int(np.argmax(logits[0]))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sampling requires an rng")
        cdf = np.cumsum(np.exp(logp))
        u = rng.random()
        action = int(np.searchsorted(cdf, u, side="right"))
        action = min(action, params.n_actions - 1)  # guard the u ~ 1.0 edge
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return action, float(logp[action]), float(values[0])


def assignment_from_action(action: int, n_slots: int) -> int | None:
    """Map a policy action index to an engine assignment (None = Stay)."""
    if not 0 <= action <= n_slots:
        raise ValueError(f"action {action} out of range for {n_slots} slots")
    return None if action == n_slots else action


def save_checkpoint(path, params: PolicyParams, train_config: dict | None = None) -> None:
    """Versioned JSON checkpoint: architecture dims, flat weight vector, and
    the training config that produced it."""
    payload = {
        "v": 1,
        "kind": "policy",
        "n_slots": params.n_slots,
        "hidden": list(params.hidden),
        "input_scale": params.input_scale,
        "weights": params.flat().tolist(),
        "train_config": train_config,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> tuple[PolicyParams, dict | None]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {path}") from exc
    if payload.get("kind") != "policy" or payload.get("v") != 1:
        raise CheckpointError(f"not a v1 policy checkpoint: {path}")
    n_slots = int(payload["n_slots"])
    hidden = tuple(int(h) for h in payload["hidden"])
    params = init_params(n_slots, hidden, float(payload["input_scale"]), seed=0)
    flat = np.asarray(payload["weights"], dtype=np.float64)
    if flat.size != params.n_params():
        raise CheckpointError(
            f"weight vector has {flat.size} entries, architecture needs {params.n_params()}"
        )
    offset = 0
    for key in WEIGHT_KEYS:
        w = params.weights[key]
        # fresh contiguous buffers, not views into the flat vector
        params.weights[key] = flat[offset : offset + w.size].reshape(w.shape).copy()
        offset += w.size
    return params, payload.get("train_config")


class PolicyScheduler:
    """Adapts trained parameters to the scheduler interface (greedy mode).

    Observations are rebuilt from the same distance rows the environment
    uses, so decisions match in-environment greedy evaluation exactly.
    """

    name = "policy"

    def __init__(self, params: PolicyParams):
        self.params = params

    def decide(self, plan, agents, tasks) -> list[int | None]:
        targets = [t.location if t is not None else None for t in tasks]
        work = [t.remaining_work if t is not None else 0 for t in tasks]
        sentinel = default_sentinel(plan)
        memo = DistanceMemo(plan)
        decisions: list[int | None] = []
        for agent in agents:
            obs = np.empty((len(tasks), 2), dtype=np.int64)
            obs[:, 0] = distance_row(plan, agent.location, targets, sentinel, memo)
            obs[:, 1] = work
            action, _, _ = policy_act(self.params, obs, mode="greedy")
            decisions.append(assignment_from_action(action, self.params.n_slots))
        return decisions
