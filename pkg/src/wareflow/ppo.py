"""PPO training for the shared policy: generalized advantage estimation,
the clipped surrogate objective with a clipped value loss, Adam, and the
single-threaded deterministic rollout/update loop.

All agents in an environment run copies of the same parameters and receive
the same per-interval shared reward; one decision contributes one
transition per agent to the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import EnvConfig, WarehouseEnv
from .policy import (
    PolicyParams,
    PolicyScheduler,
    assignment_from_action,
    backward,
    forward,
    init_params,
    log_softmax,
    policy_act,
    save_checkpoint,
)
from .rollout import derive_seed, run_episode, run_interval


class DivergenceError(RuntimeError):
    """Non-finite loss or gradient encountered during an update."""


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    value_clip: float = 15.0
    learning_rate: float = 3e-4
    minibatch_size: int = 256
    epochs: int = 4
    rollout_decisions: int = 2048
    total_env_steps: int = 200_000
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    hidden: tuple[int, int] = (64, 64)
    input_scale: float = 1.0 / 64.0
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0,1), got {self.gamma}")
        if not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must be in (0,1], got {self.gae_lambda}")
        if self.clip_ratio <= 0.0:
            raise ValueError(f"clip_ratio must be > 0, got {self.clip_ratio}")
        if self.value_clip <= 0.0:
            raise ValueError(f"value_clip must be > 0, got {self.value_clip}")
        for name in ("learning_rate", "minibatch_size", "epochs", "rollout_decisions", "total_env_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "gae_lambda": self.gae_lambda,
            "clip_ratio": self.clip_ratio,
            "value_clip": self.value_clip,
            "learning_rate": self.learning_rate,
            "minibatch_size": self.minibatch_size,
            "epochs": self.epochs,
            "rollout_decisions": self.rollout_decisions,
            "total_env_steps": self.total_env_steps,
            "entropy_coef": self.entropy_coef,
            "value_coef": self.value_coef,
            "hidden": list(self.hidden),
            "input_scale": self.input_scale,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        known = {f.name for f in TrainConfig.__dataclass_fields__.values()}
        kwargs = {k: v for k, v in d.items() if k in known}
        if "hidden" in kwargs:
            kwargs["hidden"] = tuple(kwargs["hidden"])
        return TrainConfig(**kwargs)


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    terminal_values: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets (raw, unnormalized).

    dones[t] marks transition t as terminal. A terminal transition
    bootstraps terminal_values[t] as its next value (zero by default).
    Episodes here end by hitting the horizon rather than an absorbing
    state, so the training loop bootstraps the final state's value estimate
    instead of zero; that keeps value targets stationary even though the
    observation carries no clock.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    last_adv = 0.0
    for t in range(n - 1, -1, -1):
        if dones[t]:
            next_value = 0.0 if terminal_values is None else float(terminal_values[t])
            last_adv = 0.0
        else:
            next_value = values[t + 1]
        delta = rewards[t] + gamma * next_value - values[t]
        last_adv = delta + gamma * lam * (0.0 if dones[t] else last_adv)
        adv[t] = last_adv
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Shift/scale to mean 0, std 1 (guarding degenerate batches)."""
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


@dataclass
class Trajectory:
    """One agent's stream over one episode: per decision step its observation,
    action, log-probability, value estimate, the shared reward aggregated
    over the interval, and the done flag. final_value is the value estimate
    of the state after the last transition, bootstrapped at the timeout."""

    observations: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    final_value: float = 0.0

    def __len__(self) -> int:
        return len(self.actions)

    def check(self) -> None:
        n = len(self.actions)
        aligned = all(
            len(xs) == n
            for xs in (self.observations, self.log_probs, self.values, self.rewards, self.dones)
        )
        if not aligned:
            raise ValueError("trajectory field lengths are not aligned")


@dataclass
class Batch:
    obs: np.ndarray         # (N, 2*n_slots)
    actions: np.ndarray     # (N,) int
    old_logp: np.ndarray    # (N,)
    old_values: np.ndarray  # (N,)
    advantages: np.ndarray  # (N,)
    returns: np.ndarray     # (N,)

    def __len__(self) -> int:
        return len(self.actions)

    def select(self, idx: np.ndarray) -> "Batch":
        return Batch(
            obs=self.obs[idx],
            actions=self.actions[idx],
            old_logp=self.old_logp[idx],
            old_values=self.old_values[idx],
            advantages=self.advantages[idx],
            returns=self.returns[idx],
        )


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def ppo_losses_and_grad(
    params: PolicyParams,
    batch: Batch,
    cfg: TrainConfig,
    policy_coef: float = 1.0,
    value_coef: float | None = None,
    entropy_coef: float | None = None,
) -> tuple[UpdateStats, dict[str, np.ndarray]]:
    """Evaluate the clipped losses and their analytic gradient.

    The combined objective (minimized) is
    policy_coef * L_clip + value_coef * L_value - entropy_coef * H.
    Advantages are used exactly as given; normalize beforehand if desired.
    Coefficients of zero isolate individual loss terms (used by the
    finite-difference gradient checks).
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    if value_coef is None:
        value_coef = cfg.value_coef
    if entropy_coef is None:
        entropy_coef = cfg.entropy_coef
    n = len(batch)
    eps = cfg.clip_ratio
    with np.errstate(over="ignore", invalid="ignore"):
        return _losses_and_grad(params, batch, n, eps, cfg, policy_coef, value_coef, entropy_coef)


def _losses_and_grad(params, batch, n, eps, cfg, policy_coef, value_coef, entropy_coef):
    logits, values, cache = forward(params, batch.obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    idx = np.arange(n)
    logp = logp_all[idx, batch.actions]

    # clipped surrogate
    ratio = np.exp(logp - batch.old_logp)
    clipped_ratio = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    surr_raw = ratio * batch.advantages
    surr_clip = clipped_ratio * batch.advantages
    take_raw = surr_raw <= surr_clip
    policy_loss = -np.where(take_raw, surr_raw, surr_clip).mean()
    clip_fraction = float(np.mean(np.abs(ratio - 1.0) > eps))

    # entropy bonus
    ent = -(probs * logp_all).sum(axis=1)
    entropy = ent.mean()

    # clipped value loss
    v_err = values - batch.returns
    v_clipped = batch.old_values + np.clip(values - batch.old_values, -cfg.value_clip, cfg.value_clip)
    vc_err = v_clipped - batch.returns
    take_unclipped = v_err**2 >= vc_err**2
    value_loss = 0.5 * np.where(take_unclipped, v_err**2, vc_err**2).mean()

    # backward: d(loss)/d(logp of action), then spread over logits
    clip_active = (ratio > 1.0 - eps) & (ratio < 1.0 + eps)
    dsurr_dratio = np.where(take_raw, batch.advantages, batch.advantages * clip_active)
    dloss_dlogp = -(policy_coef / n) * dsurr_dratio * ratio
    dlogits = dloss_dlogp[:, None] * (np.eye(params.n_actions)[batch.actions] - probs)
    # entropy term: dH/dlogits = -p * (logp + H)
    dH_dlogits = -probs * (logp_all + ent[:, None])
    dlogits -= (entropy_coef / n) * dH_dlogits

    v_clip_active = np.abs(values - batch.old_values) < cfg.value_clip
    dvalue = np.where(take_unclipped, v_err, vc_err * v_clip_active)
    dvalues = (value_coef / n) * dvalue

    grads = backward(params, cache, dlogits, dvalues)
    stats = UpdateStats(
        policy_loss=float(policy_loss),
        value_loss=float(value_loss),
        entropy=float(entropy),
        clip_fraction=clip_fraction,
    )
    return stats, grads


class Adam:
    """Standard Adam with bias correction, state keyed like the weights."""

    def __init__(self, params: PolicyParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.weights.items()}

    def step(self, params: PolicyParams, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params.weights[k] -= lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def ppo_update(
    params: PolicyParams,
    batch: Batch,
    cfg: TrainConfig,
    optimizer: Adam | None = None,
) -> tuple[PolicyParams, UpdateStats]:
    """One gradient step on a batch (advantages normalized per batch).

    Raises DivergenceError on non-finite losses or gradients, leaving the
    parameters untouched so callers can fall back to the last good state.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    if optimizer is None:
        optimizer = Adam(params)
    batch = Batch(
        obs=batch.obs,
        actions=batch.actions,
        old_logp=batch.old_logp,
        old_values=batch.old_values,
        advantages=normalize_advantages(batch.advantages),
        returns=batch.returns,
    )
    stats, grads = ppo_losses_and_grad(params, batch, cfg)
    finite = np.isfinite([stats.policy_loss, stats.value_loss, stats.entropy]).all()
    if not finite or any(not np.isfinite(g).all() for g in grads.values()):
        raise DivergenceError(
            f"non-finite update: policy_loss={stats.policy_loss} "
            f"value_loss={stats.value_loss} entropy={stats.entropy}"
        )
    optimizer.step(params, grads, cfg.learning_rate)
    return params, stats


@dataclass
class CurvePoint:
    env_steps: int
    mean_reward: float
    entropy: float
    clip_fraction: float


@dataclass
class TrainResult:
    params: PolicyParams          # best-by-mean-rollout-reward snapshot
    final_params: PolicyParams
    curve: list[CurvePoint] = field(default_factory=list)
    halted: bool = False
    env_steps: int = 0


def collect_episode(
    env_config: EnvConfig,
    params: PolicyParams,
    act_rng: np.random.Generator,
    env_seed: int,
) -> tuple[list[Trajectory], float]:
    """Roll one episode with the sampling policy; every agent runs the same
    parameter snapshot and records its own trajectory with the shared
    per-interval rewards. Returns the trajectories and the episode return."""
    n_agents = env_config.n_agents
    env = WarehouseEnv(env_config.with_seed(env_seed))
    observations = env.reset()
    trajectories = [Trajectory() for _ in range(n_agents)]
    done = False
    while not done:
        actions = []
        for a in range(n_agents):
            action, logp, value = policy_act(params, observations[a], act_rng, mode="sample")
            traj = trajectories[a]
            traj.observations.append(observations[a].reshape(-1).astype(np.float64))
            traj.actions.append(action)
            traj.log_probs.append(logp)
            traj.values.append(value)
            actions.append(assignment_from_action(action, params.n_slots))
        interval = run_interval(env, actions)
        done = interval.done
        observations = interval.observations
        for traj in trajectories:
            traj.rewards.append(interval.reward)
            traj.dones.append(done)
    # horizon end is a timeout, not an absorbing state: bootstrap the final
    # observation's value estimate at the terminal transition
    final_obs = env.observe()
    for a, traj in enumerate(trajectories):
        _, _, traj.final_value = policy_act(params, final_obs[a], mode="greedy")
        traj.check()
    return trajectories, env.cumulative_reward


def batch_from_trajectories(trajectories: list[Trajectory], cfg: TrainConfig) -> Batch:
    """Flatten trajectories into a training batch with GAE advantages."""
    obs_buf, act_buf, logp_buf, val_buf = [], [], [], []
    adv_buf, ret_buf = [], []
    for traj in trajectories:
        if len(traj) == 0:
            continue
        terminal_values = np.zeros(len(traj))
        terminal_values[-1] = traj.final_value
        adv, ret = compute_gae(
            np.asarray(traj.rewards),
            np.asarray(traj.values),
            np.asarray(traj.dones, dtype=bool),
            cfg.gamma,
            cfg.gae_lambda,
            terminal_values,
        )
        obs_buf.extend(traj.observations)
        act_buf.extend(traj.actions)
        logp_buf.extend(traj.log_probs)
        val_buf.extend(traj.values)
        adv_buf.append(adv)
        ret_buf.append(ret)
    return Batch(
        obs=np.asarray(obs_buf),
        actions=np.asarray(act_buf, dtype=np.int64),
        old_logp=np.asarray(logp_buf),
        old_values=np.asarray(val_buf),
        advantages=np.concatenate(adv_buf) if adv_buf else np.zeros(0),
        returns=np.concatenate(ret_buf) if ret_buf else np.zeros(0),
    )


def _collect_rollout(
    env_config: EnvConfig,
    params: PolicyParams,
    cfg: TrainConfig,
    act_rng: np.random.Generator,
    episode_counter: int,
    env_steps: int,
):
    """Run whole episodes until the decision quota is met (or the step
    budget runs out). Returns (batch, episode_returns, episodes, env_steps)."""
    trajectories: list[Trajectory] = []
    episode_returns = []
    decisions = 0
    episodes = 0
    while decisions < cfg.rollout_decisions and env_steps < cfg.total_env_steps:
        env_seed = derive_seed(cfg.seed, 100, episode_counter + episodes)
        episode_trajs, episode_return = collect_episode(env_config, params, act_rng, env_seed)
        trajectories.extend(episode_trajs)
        episode_returns.append(episode_return)
        decisions += len(episode_trajs[0]) if episode_trajs else 0
        env_steps += env_config.horizon
        episodes += 1
    return batch_from_trajectories(trajectories, cfg), episode_returns, episodes, env_steps


def train(
    env_config: EnvConfig,
    cfg: TrainConfig,
    curve_path=None,
    checkpoint_path=None,
) -> TrainResult:
    """Train shared-parameter PPO on an environment.

    Single-threaded and fully deterministic for a given (env_config, cfg):
    episode seeds, action sampling, and minibatch shuffles all derive from
    cfg.seed. Writes the learning curve CSV and best checkpoint if paths
    are given. On divergence (non-finite update) training halts and the
    last good snapshot is kept.
    """
    cfg.validate()
    env_config.validate()
    params = init_params(env_config.n_slots, cfg.hidden, cfg.input_scale, seed=derive_seed(cfg.seed, 7))
    optimizer = Adam(params)
    act_rng = np.random.default_rng(derive_seed(cfg.seed, 11))
    result = TrainResult(params=params.copy(), final_params=params)
    best_reward = -np.inf
    episode_counter = 0
    env_steps = 0
    halted = False
    while env_steps < cfg.total_env_steps and not halted:
        batch, episode_returns, episodes, env_steps = _collect_rollout(
            env_config, params, cfg, act_rng, episode_counter, env_steps
        )
        episode_counter += episodes
        if len(batch) == 0:
            break
        # the snapshot is the policy that earned this rollout's reward; it is
        # both the divergence fallback and the best-checkpoint candidate
        snapshot = params.copy()
        mean_reward = float(np.mean(episode_returns)) if episode_returns else float("nan")
        if episode_returns and mean_reward > best_reward:
            best_reward = mean_reward
            result.params = snapshot
        stats_acc: list[UpdateStats] = []
        try:
            for _ in range(cfg.epochs):
                perm = act_rng.permutation(len(batch))
                for start in range(0, len(batch), cfg.minibatch_size):
                    mb = batch.select(perm[start : start + cfg.minibatch_size])
                    if len(mb) == 0:
                        continue
                    _, stats = ppo_update(params, mb, cfg, optimizer)
                    stats_acc.append(stats)
        except DivergenceError:
            params = snapshot.copy()
            halted = True
        if stats_acc:
            result.curve.append(
                CurvePoint(
                    env_steps=env_steps,
                    mean_reward=mean_reward,
                    entropy=float(np.mean([s.entropy for s in stats_acc])),
                    clip_fraction=float(np.mean([s.clip_fraction for s in stats_acc])),
                )
            )
    result.final_params = params
    result.halted = halted
    result.env_steps = env_steps
    if curve_path is not None:
        write_curve(curve_path, result.curve)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, result.params, cfg.to_dict())
    return result


def write_curve(path, curve: list[CurvePoint]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("steps,mean_reward,entropy,clip_fraction\n")
        for pt in curve:
            fh.write(f"{pt.env_steps},{pt.mean_reward!r},{pt.entropy!r},{pt.clip_fraction!r}\n")


@dataclass
class EvalReport:
    mean_reward: float
    stderr: float
    mean_slowdown: float | None
    records: list[dict]


def evaluate(params: PolicyParams, env_config: EnvConfig, episodes: int, seed: int) -> EvalReport:
    """Greedy-mode evaluation over seeded episodes (deterministic)."""
    scheduler = PolicyScheduler(params)
    return evaluate_scheduler(lambda i: scheduler, env_config, episodes, seed)


def evaluate_scheduler(scheduler_factory, env_config: EnvConfig, episodes: int, seed: int) -> EvalReport:
    """Shared evaluation loop: scheduler_factory(i) supplies the scheduler
    for episode i (fresh per episode so stateful schedulers stay paired),
    and episode i runs under a seed derived from (seed, i). Using the same
    (seed, episodes) for two schedulers yields common random numbers."""
    records = []
    rewards = []
    slowdowns = []
    for i in range(episodes):
        config = env_config.with_seed(derive_seed(seed, i))
        res = run_episode(config, scheduler_factory(i))
        rewards.append(res.total_reward)
        if res.metrics.mean_slowdown is not None:
            slowdowns.append(res.metrics.mean_slowdown)
        records.append(
            {
                "episode": i,
                "env_seed": config.seed,
                "reward": res.total_reward,
                "mean_slowdown": res.metrics.mean_slowdown,
                "completed": res.metrics.completed,
                "uncompleted": res.metrics.uncompleted,
                "illegal_actions": res.illegal_actions,
            }
        )
    if rewards:
        mean = float(np.mean(rewards))
        stderr = float(np.std(rewards, ddof=1) / np.sqrt(len(rewards))) if len(rewards) > 1 else 0.0
    else:
        mean, stderr = float("nan"), float("nan")
    return EvalReport(
        mean_reward=mean,
        stderr=stderr,
        mean_slowdown=float(np.mean(slowdowns)) if slowdowns else None,
        records=records,
    )
