"""Command-line entry point: ``bebop plan|learn|validate|bench``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .bt import parse, to_pretty, to_text
from .config import ExperimentConfig, load_experiment, load_suite
from .envs import ManipulationEnv
from .evaluation import run_episode, validate
from .experiment import run_experiment
from .outputs import emit_outputs, format_table
from .planner import build_tree, free_parameters


def _cmd_plan(args) -> int:
    suite = load_suite(args.suite)
    entry = suite.task(args.task)
    tree = build_tree(entry.goal, entry.library)
    print(to_pretty(tree) if args.pretty else to_text(tree))
    if args.params:
        for d in free_parameters(tree, entry.library).dims:
            print(f"  {d.name}: [{d.lower}, {d.upper}]")
    return 0


def _run_configs(configs: Sequence[ExperimentConfig], out: Path, workers: int, reference: Optional[str]) -> dict:
    results = {}
    for cfg in configs:
        t0 = time.time()
        records = run_experiment(cfg, workers=workers)
        results[cfg] = records
        solved = sum(r.solved for r in records)
        print(f"{cfg.label}: {solved}/{len(records)} solved, {time.time() - t0:.1f}s", flush=True)
    summary = emit_outputs(results, out, reference=reference)
    print(format_table(summary["speedup"]))
    print(f"outputs in {out}")
    return summary


def _cmd_learn(args) -> int:
    configs = load_experiment(args.config)
    if args.repetitions:
        configs = [replace(c, repetitions=args.repetitions) for c in configs]
    out = Path(args.out or Path("runs") / Path(args.config).stem)
    _run_configs(configs, out, args.workers, args.reference)
    return 0


def _cmd_bench(args) -> int:
    paths = sorted(Path(args.config_dir).glob("*.yaml"))
    if not paths:
        print(f"no *.yaml configs in {args.config_dir}", file=sys.stderr)
        return 2
    out = Path(args.out or Path("runs") / "bench")
    by_task: dict[str, list[ExperimentConfig]] = {}
    for p in paths:
        for c in load_experiment(p):
            group = by_task.setdefault(c.task, [])
            if c not in group:  # the same experiment listed in two files runs once
                group.append(c)
    for task, configs in by_task.items():
        print(f"== {task}")
        _run_configs(configs, out / task, args.workers, args.reference)
    return 0


def _read_tree(arg: str):
    p = Path(arg)
    return parse(p.read_text() if p.exists() else arg)


def _read_params(arg: str) -> dict:
    p = Path(arg)
    doc = json.loads(p.read_text() if p.exists() else arg)
    # accept a stored run record as well as a bare mapping
    return dict(doc.get("best_params", doc))


def _cmd_validate(args) -> int:
    suite = load_suite(args.suite)
    entry = suite.task(args.task)
    tree = _read_tree(args.tree)
    params = _read_params(args.params)
    env = ManipulationEnv(entry.env)
    _, seeds = ExperimentConfig(task=entry.name, master_seed=args.master_seed, n_validation_seeds=args.episodes).seeds(0)
    if args.trace:
        with open(args.trace, "w") as fh:
            for s in seeds:
                run_episode(tree, params, env, s, affordances=False, penalty=0.0, trace=fh)
    v = validate(tree, params, env, seeds, n_episodes=args.episodes)
    print(json.dumps({"task": entry.name, "episodes": len(v.episodes), "success_rate": v.success_rate, "mean_reward": v.mean_reward}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bebop", description="Behavior-tree planning with Bayesian-optimized parameters.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a task and print its tree")
    p.add_argument("task")
    p.add_argument("--suite", help="suite file (default: bundled suite)")
    p.add_argument("--pretty", action="store_true", help="indented output")
    p.add_argument("--params", action="store_true", help="also list the free parameters")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("learn", help="run the experiments of one config file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: runs/<config name>)")
    p.add_argument("--workers", type=int, default=1, help="repetitions run in parallel")
    p.add_argument("--repetitions", type=int, help="override the repetition count")
    p.add_argument("--reference", help="label the speedup table is relative to")
    p.set_defaults(func=_cmd_learn)

    p = sub.add_parser("validate", help="score a tree and parameter set on held-out seeds")
    p.add_argument("tree", help="tree file or canonical text")
    p.add_argument("params", help="JSON file or string; run records are accepted")
    p.add_argument("task")
    p.add_argument("--suite")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--trace", help="write a JSON-lines trajectory dump here")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("bench", help="run every config in a directory, grouped by task")
    p.add_argument("config_dir")
    p.add_argument("--out", help="output directory (default: runs/bench)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--reference")
    p.set_defaults(func=_cmd_bench)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
