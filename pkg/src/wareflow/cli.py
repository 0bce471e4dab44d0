"""wareflow command line: run experiments, train policies, evaluate
transfer, compare schedulers, and serve the engine over stdio.

Exit codes: 0 success, 2 invalid config or missing checkpoint.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .domain import DomainError
from .engine import ConfigError
from .floorplan import ParseError
from .policy import CheckpointError
from .ppo import TrainConfig, train
from .harness import (
    ComparisonReport,
    ExperimentSpec,
    compare_schedulers,
    env_config_from_dict,
    load_env_dict,
    run_experiment,
    run_transfer,
)
from .server import serve_stdio

USAGE_ERRORS = (ConfigError, CheckpointError, ParseError, DomainError, KeyError, ValueError)


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_run(args) -> int:
    spec = ExperimentSpec.from_file(args.spec)
    if args.episodes is not None:
        spec.episodes = args.episodes
    if args.seed is not None:
        spec.seeds = [args.seed]
    table = run_experiment(spec, out_dir=args.out, trace=args.trace)
    print(table.text(), end="")
    return 0


def cmd_train(args) -> int:
    raw = _load_json(args.spec)
    env_config = env_config_from_dict(load_env_dict(raw["env"], Path(args.spec).parent))
    cfg = TrainConfig.from_dict(raw.get("train", {}))
    if args.seed is not None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    out = Path(args.out if args.out is not None else raw.get("outputs", "out"))
    out.mkdir(parents=True, exist_ok=True)
    result = train(
        env_config,
        cfg,
        curve_path=out / "curve.csv",
        checkpoint_path=out / "checkpoint.json",
    )
    status = "halted (divergence)" if result.halted else "ok"
    last = result.curve[-1].mean_reward if result.curve else float("nan")
    print(f"trained {result.env_steps} env steps [{status}]; last mean reward {last:.3f}")
    print(f"checkpoint: {out / 'checkpoint.json'}")
    return 0


def cmd_transfer(args) -> int:
    raw = _load_json(args.spec)
    base = Path(args.spec).parent
    train_env = env_config_from_dict(load_env_dict(raw["train_env"], base))
    eval_env = env_config_from_dict(load_env_dict(raw["eval_env"], base))
    cfg = TrainConfig.from_dict(raw.get("train", {}))
    episodes = args.episodes if args.episodes is not None else int(raw.get("episodes", 100))
    out = args.out if args.out is not None else raw.get("outputs", "out")
    report = run_transfer(train_env, eval_env, cfg, episodes=episodes, out_dir=out)
    print(f"transferred mean reward: {report.transferred.mean_reward:.3f}")
    print(f"native mean reward:      {report.native.mean_reward:.3f}")
    print(f"random baseline:         {report.random_baseline.mean_reward:.3f}")
    ratio = "n/a" if report.improvement_ratio is None else f"{report.improvement_ratio:.3f}"
    print(f"improvement ratio:       {ratio}")
    return 0


def cmd_compare(args) -> int:
    raw = _load_json(args.spec)
    env_config = env_config_from_dict(load_env_dict(raw["env"], Path(args.spec).parent))
    names = list(raw["schedulers"])
    episodes = args.episodes if args.episodes is not None else int(raw.get("episodes", 100))
    seeds = [args.seed] if args.seed is not None else list(raw.get("seeds", [0]))
    trace_root = Path(args.out) / "traces" if (args.trace and args.out) else None
    report: ComparisonReport = compare_schedulers(env_config, names, episodes, seeds, trace_root)
    ranked = sorted(names, key=lambda n: report.means[n].mean_reward, reverse=True)
    for name in ranked:
        cell = report.means[name]
        print(f"{name:<12} mean {cell.mean_reward:>12.4f}  stderr {cell.stderr:.4f}")
    for (a, b), rate in sorted(report.win_rates.items()):
        print(f"win rate {a} over {b}: {rate:.3f} (p={report.paired_pvalues[(a, b)]:.4f})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "means": {n: vars(report.means[n]) for n in names},
            "win_rates": {f"{a}>{b}": v for (a, b), v in report.win_rates.items()},
            "paired_pvalues": {f"{a}>{b}": v for (a, b), v in report.paired_pvalues.items()},
        }
        with open(out / "compare.json", "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    return 0


def cmd_serve(args) -> int:
    if not args.stdio:
        print("only --stdio serving is supported", file=sys.stderr)
        return 2
    return serve_stdio()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wareflow")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        if spec:
            p.add_argument("spec", help="experiment spec JSON file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--episodes", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--trace", action="store_true", help="write JSON-lines episode traces")

    p_run = sub.add_parser("run", help="evaluate a scheduler per an experiment spec")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_train = sub.add_parser("train", help="train a PPO policy per a training spec")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_tr = sub.add_parser("transfer", help="train on one env, evaluate on another")
    common(p_tr)
    p_tr.set_defaults(func=cmd_transfer)

    p_cmp = sub.add_parser("compare", help="paired comparison of schedulers")
    common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_srv = sub.add_parser("serve", help="serve the engine over a wire protocol")
    p_srv.add_argument("--stdio", action="store_true", help="newline-delimited JSON on stdio")
    p_srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
