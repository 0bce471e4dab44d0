"""Experiment orchestration: declarative JSON specs, baseline tables,
paired scheduler comparisons, and transfer runs.

Episode i under base seed s always runs with the env seed derived from
(s, i), so two schedulers evaluated with the same (seeds, episodes) see
identical environments (common random numbers). All artifacts are
deterministic given the spec; a run manifest embeds the resolved config
and a git-describable build id.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as scipy_stats

from . import __version__
from .domain import TaskSpec
from .engine import AgentSpec, ConfigError, EnvConfig
from .floorplan import make_corridor, make_maze, make_open_grid, parse_floorplan
from .policy import CheckpointError, PolicyScheduler, load_checkpoint
from .ppo import EvalReport, TrainConfig, evaluate, evaluate_scheduler, train
from .rollout import derive_seed, run_episode
from .schedulers import GreedyNearestScheduler, MaxFlowScheduler, RandomScheduler

EPISODE_CSV_HEADER = (
    "scheduler,seed,episode,env_seed,reward,mean_slowdown,completed,uncompleted,illegal_actions"
)
SUMMARY_CSV_HEADER = (
    "scheduler,num_agents,skills_per_agent,episodes,mean_reward,stderr,mean_slowdown"
)


# -- environment construction ------------------------------------------------

def resolve_plan(spec) -> str:
    """Normalize a plan spec (ASCII string or generator dict) to ASCII."""
    if isinstance(spec, str):
        return parse_floorplan(spec).render()
    kind = spec.get("kind")
    if kind == "corridor":
        plan = make_corridor(int(spec["arm_length"]), int(spec["stem_length"]))
    elif kind == "grid":
        plan = make_open_grid(int(spec["width"]), int(spec["height"]))
    elif kind == "maze":
        plan = make_maze(int(spec["width"]), int(spec["height"]), int(spec.get("seed", 0)))
    else:
        raise ConfigError(f"unknown plan kind {kind!r}")
    return plan.render()


def env_config_from_dict(d: dict) -> EnvConfig:
    resolved = dict(d)
    resolved["plan"] = resolve_plan(d["plan"])
    return EnvConfig.from_dict(resolved)


def load_env_dict(env: dict, base_dir) -> dict:
    """Resolve an inline env dict or an include-by-reference {"ref": path}."""
    if isinstance(env, dict) and "ref" in env:
        with open(Path(base_dir) / env["ref"], "r", encoding="utf-8") as fh:
            return json.load(fh)
    return env


def corridor_env(
    n_agents: int,
    skills_per_agent: int,
    n_types: int = 3,
    arm_length: int = 5,
    stem_length: int = 5,
    capacity: int = 1,
    workload: int = 10,
    arrival_probability: float = 0.5,
    decision_interval: int = 10,
    horizon: int = 500,
    illegal_action_penalty: float = -1.0,
    seed: int = 0,
) -> EnvConfig:
    """T-corridor benchmark: one slot per task type; agent i holds
    skills_per_agent consecutive types starting at i (circular)."""
    catalog = tuple(
        TaskSpec(task_type=t, workload=workload, capacity=capacity) for t in range(n_types)
    )
    agents = tuple(
        AgentSpec(skills=frozenset((i + k) % n_types for k in range(skills_per_agent)))
        for i in range(n_agents)
    )
    return EnvConfig(
        plan=make_corridor(arm_length, stem_length),
        task_catalog=catalog,
        agents=agents,
        arrival_probability=arrival_probability,
        decision_interval=decision_interval,
        horizon=horizon,
        illegal_action_penalty=illegal_action_penalty,
        seed=seed,
    )


def open_grid_env(width: int = 10, height: int = 10, **kwargs) -> EnvConfig:
    cfg = corridor_env(**kwargs)
    return EnvConfig(
        plan=make_open_grid(width, height),
        task_catalog=cfg.task_catalog,
        agents=cfg.agents,
        arrival_probability=cfg.arrival_probability,
        decision_interval=cfg.decision_interval,
        horizon=cfg.horizon,
        illegal_action_penalty=cfg.illegal_action_penalty,
        seed=cfg.seed,
    )


def maze_env(width: int = 11, height: int = 11, maze_seed: int = 0, **kwargs) -> EnvConfig:
    cfg = corridor_env(**kwargs)
    return EnvConfig(
        plan=make_maze(width, height, maze_seed),
        task_catalog=cfg.task_catalog,
        agents=cfg.agents,
        arrival_probability=cfg.arrival_probability,
        decision_interval=cfg.decision_interval,
        horizon=cfg.horizon,
        illegal_action_penalty=cfg.illegal_action_penalty,
        seed=cfg.seed,
    )


# -- scheduler selection -----------------------------------------------------

def make_scheduler_factory(name: str):
    """Resolve a scheduler name ("maxflow" | "greedy" | "random" |
    "policy:<checkpoint>") to a per-episode factory f(env_seed) -> scheduler.

    Stateless schedulers are shared; the random scheduler is re-seeded per
    episode from the env seed so runs stay reproducible and paired.
    """
    if name == "maxflow":
        shared = MaxFlowScheduler()
        return lambda env_seed: shared
    if name == "greedy":
        shared = GreedyNearestScheduler()
        return lambda env_seed: shared
    if name == "random":
        return lambda env_seed: RandomScheduler(derive_seed(env_seed, 977))
    if name.startswith("policy:"):
        params, _ = load_checkpoint(name.split(":", 1)[1])
        shared = PolicyScheduler(params)
        return lambda env_seed: shared
    raise ConfigError(f"unknown scheduler {name!r}")


# -- experiment running ------------------------------------------------------

@dataclass
class SummaryCell:
    episodes: int
    mean_reward: float
    stderr: float
    mean_slowdown: float | None


@dataclass
class SummaryTable:
    """Rows keyed by (scheduler, num_agents, skills_per_agent)."""

    rows: dict[tuple[str, int, float], SummaryCell]

    def csv_lines(self) -> list[str]:
        lines = [SUMMARY_CSV_HEADER + "\n"]
        for key in sorted(self.rows):
            cell = self.rows[key]
            sd = "" if cell.mean_slowdown is None else repr(cell.mean_slowdown)
            lines.append(
                f"{key[0]},{key[1]},{key[2]:g},{cell.episodes},"
                f"{cell.mean_reward!r},{cell.stderr!r},{sd}\n"
            )
        return lines

    def text(self) -> str:
        out = [
            f"{'scheduler':<12} {'agents':>6} {'skills':>6} {'episodes':>8} "
            f"{'mean reward':>14} {'stderr':>10} {'slowdown':>10}"
        ]
        for key in sorted(self.rows):
            cell = self.rows[key]
            sd = "-" if cell.mean_slowdown is None else f"{cell.mean_slowdown:.3f}"
            out.append(
                f"{key[0]:<12} {key[1]:>6} {key[2]:>6g} {cell.episodes:>8} "
                f"{cell.mean_reward:>14.4f} {cell.stderr:>10.4f} {sd:>10}"
            )
        return "\n".join(out) + "\n"


def _skills_per_agent(config: EnvConfig) -> float:
    counts = [len(a.skills) for a in config.agents]
    if not counts:
        return 0.0
    return float(counts[0]) if len(set(counts)) == 1 else float(np.mean(counts))


def build_id() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
        )
        git = desc.stdout.strip() if desc.returncode == 0 else "unknown"
    except (OSError, subprocess.TimeoutExpired):
        git = "unknown"
    return f"wareflow {__version__} ({git})"


def run_cell(
    env_config: EnvConfig,
    scheduler_name: str,
    episodes: int,
    seeds: list[int],
    trace_dir: Path | None = None,
) -> list[dict]:
    """Evaluate one scheduler on one env over seeds x episodes; returns
    per-episode records (and writes traces when requested)."""
    factory = make_scheduler_factory(scheduler_name)
    records = []
    for base_seed in seeds:
        for i in range(episodes):
            env_seed = derive_seed(base_seed, i)
            config = env_config.with_seed(env_seed)
            trace_path = None
            if trace_dir is not None:
                trace_dir.mkdir(parents=True, exist_ok=True)
                trace_path = trace_dir / f"ep_{base_seed}_{i}.jsonl"
            res = run_episode(config, factory(env_seed), trace_path=trace_path)
            records.append(
                {
                    "scheduler": scheduler_name,
                    "seed": base_seed,
                    "episode": i,
                    "env_seed": env_seed,
                    "reward": res.total_reward,
                    "mean_slowdown": res.metrics.mean_slowdown,
                    "completed": res.metrics.completed,
                    "uncompleted": res.metrics.uncompleted,
                    "illegal_actions": res.illegal_actions,
                }
            )
    return records


def summarize(records: list[dict]) -> SummaryCell:
    rewards = [r["reward"] for r in records]
    slowdowns = [r["mean_slowdown"] for r in records if r["mean_slowdown"] is not None]
    stderr = float(np.std(rewards, ddof=1) / np.sqrt(len(rewards))) if len(rewards) > 1 else 0.0
    return SummaryCell(
        episodes=len(records),
        mean_reward=float(np.mean(rewards)),
        stderr=stderr,
        mean_slowdown=float(np.mean(slowdowns)) if slowdowns else None,
    )


def episode_csv_lines(records: list[dict]) -> list[str]:
    lines = [EPISODE_CSV_HEADER + "\n"]
    for r in records:
        sd = "" if r["mean_slowdown"] is None else repr(r["mean_slowdown"])
        lines.append(
            f"{r['scheduler']},{r['seed']},{r['episode']},{r['env_seed']},"
            f"{r['reward']!r},{sd},{r['completed']},{r['uncompleted']},{r['illegal_actions']}\n"
        )
    return lines


@dataclass
class ExperimentSpec:
    name: str
    env: dict
    scheduler: str
    episodes: int
    seeds: list[int]
    outputs: str

    @staticmethod
    def from_file(path) -> "ExperimentSpec":
        path = Path(path)
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        env = load_env_dict(raw["env"], path.parent)
        seeds = list(raw.get("seeds", [0]))
        if not seeds:
            raise ConfigError("seeds must be nonempty")
        return ExperimentSpec(
            name=raw.get("name", path.stem),
            env=env,
            scheduler=raw.get("scheduler", "maxflow"),
            episodes=int(raw.get("episodes", 100)),
            seeds=seeds,
            outputs=raw.get("outputs", "out"),
        )


def run_experiment(spec: ExperimentSpec, out_dir=None, trace: bool = False) -> SummaryTable:
    """Run one experiment spec end to end, writing all artifacts."""
    env_config = env_config_from_dict(spec.env)
    out = Path(out_dir if out_dir is not None else spec.outputs)
    out.mkdir(parents=True, exist_ok=True)
    trace_dir = out / "traces" / spec.scheduler if trace else None
    records = run_cell(env_config, spec.scheduler, spec.episodes, spec.seeds, trace_dir)
    cell = summarize(records)
    table = SummaryTable(
        rows={(spec.scheduler, env_config.n_agents, _skills_per_agent(env_config)): cell}
    )
    with open(out / "episodes.csv", "w", encoding="utf-8") as fh:
        fh.writelines(episode_csv_lines(records))
    with open(out / "summary.csv", "w", encoding="utf-8") as fh:
        fh.writelines(table.csv_lines())
    with open(out / "summary.txt", "w", encoding="utf-8") as fh:
        fh.write(table.text())
    manifest = {
        "v": 1,
        "name": spec.name,
        "build": build_id(),
        "scheduler": spec.scheduler,
        "episodes": spec.episodes,
        "seeds": spec.seeds,
        "config": env_config.to_dict(),
        "artifacts": ["episodes.csv", "summary.csv", "summary.txt"],
    }
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return table


# -- scheduler comparison ----------------------------------------------------

@dataclass
class ComparisonReport:
    means: dict[str, SummaryCell]
    win_rates: dict[tuple[str, str], float]       # P(a beats b) over paired episodes
    paired_pvalues: dict[tuple[str, str], float]  # one-sided: a's mean reward > b's
    records: dict[str, list[dict]]


def compare_schedulers(
    env_config: EnvConfig,
    scheduler_names: list[str],
    episodes: int,
    seeds: list[int],
    trace_root: Path | None = None,
) -> ComparisonReport:
    """Paired comparison under common random numbers: every scheduler sees
    the same derived env seed for episode (seed, i)."""
    all_records: dict[str, list[dict]] = {}
    for name in scheduler_names:
        trace_dir = (trace_root / name) if trace_root is not None else None
        all_records[name] = run_cell(env_config, name, episodes, seeds, trace_dir)
    means = {name: summarize(recs) for name, recs in all_records.items()}
    win_rates: dict[tuple[str, str], float] = {}
    pvalues: dict[tuple[str, str], float] = {}
    for a in scheduler_names:
        for b in scheduler_names:
            if a == b:
                continue
            ra = np.array([r["reward"] for r in all_records[a]])
            rb = np.array([r["reward"] for r in all_records[b]])
            win_rates[(a, b)] = float(np.mean(ra > rb))
            diff = ra - rb
            if np.allclose(diff, 0.0):
                pvalues[(a, b)] = 1.0
            else:
                t_res = scipy_stats.ttest_rel(ra, rb, alternative="greater")
                pvalues[(a, b)] = float(t_res.pvalue)
    return ComparisonReport(
        means=means, win_rates=win_rates, paired_pvalues=pvalues, records=all_records
    )


# -- transfer ----------------------------------------------------------------

@dataclass
class TransferReport:
    transferred: EvalReport
    native: EvalReport
    random_baseline: EvalReport
    raw_ratio: float
    improvement_ratio: float | None


def run_transfer(
    train_env: EnvConfig,
    eval_env: EnvConfig,
    train_cfg: TrainConfig,
    episodes: int = 100,
    out_dir=None,
) -> TransferReport:
    """Train on train_env, evaluate that policy on eval_env against a model
    trained natively on eval_env for the same budget (plus a random-baseline
    anchor with the same paired episode seeds)."""
    if train_env.n_slots != eval_env.n_slots:
        raise ConfigError(
            f"transfer undefined: observation/action dims differ "
            f"({train_env.n_slots} vs {eval_env.n_slots} task slots)"
        )
    skills_a = sorted(tuple(sorted(a.skills)) for a in train_env.agents)
    skills_b = sorted(tuple(sorted(a.skills)) for a in eval_env.agents)
    if skills_a != skills_b:
        raise ConfigError("transfer undefined: agent skill structures differ")

    transferred_result = train(train_env, train_cfg)
    native_result = train(eval_env, train_cfg)
    eval_seed = derive_seed(train_cfg.seed, 12345)
    transferred = evaluate(transferred_result.params, eval_env, episodes, eval_seed)
    native = evaluate(native_result.params, eval_env, episodes, eval_seed)
    random_eval = evaluate_scheduler(
        lambda i: RandomScheduler(derive_seed(eval_seed, i, 977)),
        eval_env,
        episodes,
        eval_seed,
    )
    raw_ratio = transferred.mean_reward / native.mean_reward if native.mean_reward else float("nan")
    native_gain = native.mean_reward - random_eval.mean_reward
    improvement_ratio = (
        (transferred.mean_reward - random_eval.mean_reward) / native_gain
        if native_gain > 0
        else None
    )
    report = TransferReport(
        transferred=transferred,
        native=native,
        random_baseline=random_eval,
        raw_ratio=raw_ratio,
        improvement_ratio=improvement_ratio,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "v": 1,
            "build": build_id(),
            "train_config": train_cfg.to_dict(),
            "train_env": train_env.to_dict(),
            "eval_env": eval_env.to_dict(),
            "episodes": episodes,
            "transferred_mean_reward": transferred.mean_reward,
            "native_mean_reward": native.mean_reward,
            "random_mean_reward": random_eval.mean_reward,
            "raw_ratio": raw_ratio,
            "improvement_ratio": improvement_ratio,
        }
        with open(out / "transfer.json", "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    return report
