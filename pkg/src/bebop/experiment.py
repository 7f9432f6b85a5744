"""Experiment orchestration: plan, optimize (plain or cascaded), validate."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

from .bo import BOConfig, OptState, run_batch
from .bt import BTNode, count_action_nodes, extract_subtree, to_text
from .config import ExperimentConfig, Suite, load_suite
from .envs import ManipulationEnv
from .evaluation import PolicyEvaluation, evaluate_adaptive, validate
from .planner import build_tree, free_parameters
from .surrogate import ForestConfig


@dataclass(frozen=True)
class CurvePoint:
    steps: int
    mean_reward: float
    success_rate: float
    stage: int = 0


@dataclass
class StageRecord:
    stage: int
    tree: str
    dimensions: list[str]
    iterations: int = 0
    steps: int = 0
    best_reward: float = -math.inf
    best_params: dict = field(default_factory=dict)
    # (params, aggregate, episodes) per iteration
    history: list[tuple[dict, float, int]] = field(default_factory=list)


@dataclass
class RunRecord:
    label: str
    task: str
    mode: str
    repetition: int
    planned_tree: str
    training_seeds: list[int]
    validation_seeds: list[int]
    curve: list[CurvePoint] = field(default_factory=list)
    stages: list[StageRecord] = field(default_factory=list)
    best_tree: str = ""
    best_params: dict = field(default_factory=dict)
    total_steps: int = 0
    evaluations: int = 0
    improvements: int = 0
    validations: int = 0
    solved: bool = False

    def first_crossing(self, threshold: float = 0.95) -> Optional[int]:
        """Training steps at which validation success first reaches ``threshold``."""
        for p in self.curve:
            if p.success_rate >= threshold:
                return p.steps
        return None


def bo_config(config: ExperimentConfig) -> BOConfig:
    forest = ForestConfig(n_trees=config.n_trees, lam=config.lam, lam_scale=config.lam_scale)
    return BOConfig(
        beta=config.beta,
        uncertainty="classic" if config.mode == "rf-classic-baseline" else "augmented",
        strategy="random" if config.mode == "random-search-baseline" else "bo",
        n_initial=config.n_initial,
        n_candidates=config.n_candidates,
        forest=forest,
    )


def cascade_stages(tree: BTNode) -> list[BTNode]:
    """Subtrees for n = 1..N, plus the full tree when it differs from the last."""
    n_free = count_action_nodes(tree, free_only=True)
    if n_free == 0:
        return [tree]
    stages = [extract_subtree(tree, n) for n in range(1, n_free + 1)]
    if to_text(stages[-1]) != to_text(tree):
        stages.append(tree)
    return stages


def run_repetition(config: ExperimentConfig, repetition: int, suite: Optional[Suite] = None) -> RunRecord:
    suite = suite or load_suite(config.suite)
    entry = suite.task(config.task)
    tree = build_tree(entry.goal, entry.library)
    env = ManipulationEnv(entry.env, affordances=config.affordances)
    train, val = config.seeds(repetition)
    record = RunRecord(
        label=config.label,
        task=config.task,
        mode=config.mode,
        repetition=repetition,
        planned_tree=to_text(tree),
        training_seeds=train,
        validation_seeds=val,
        best_tree=to_text(tree),
    )
    stages = cascade_stages(tree) if config.mode == "cascaded" else [tree]
    cfg = bo_config(config)
    base_seed = config.bo_seed(repetition)
    prev_best: Optional[dict] = None

    for k, stage_tree in enumerate(stages):
        space = free_parameters(stage_tree, entry.library)
        if prev_best:
            shared = {n: v for n, v in prev_best.items() if n in space.names}
            space = space.with_priors(shared, config.cascade_prior_strength)
        stage = StageRecord(k, to_text(stage_tree), space.names)
        record.stages.append(stage)
        state = OptState(space, cfg, seed=base_seed + k)
        stage_solved = False

        def evaluator(params, stage_tree=stage_tree, state=state, stage=stage) -> PolicyEvaluation:
            ev = evaluate_adaptive(stage_tree, params, env, train, state.best_reward)
            record.total_steps += ev.steps
            record.evaluations += 1
            stage.steps += ev.steps
            stage.iterations += 1
            stage.history.append((dict(params), ev.aggregate, len(ev.episodes)))
            return ev

        def on_result(params, ev, improved, stage_tree=stage_tree, k=k):
            nonlocal stage_solved
            if not improved:
                return
            record.improvements += 1
            v = validate(stage_tree, params, env, val, training_seeds=train)
            record.validations += 1
            record.curve.append(CurvePoint(record.total_steps, v.mean_reward, v.success_rate, k))
            record.best_tree = to_text(stage_tree)
            record.best_params = dict(params)
            # an intermediate stage is done once its subtree reliably
            # finishes; the last one once the task goal is met
            final = k == len(stages) - 1
            rate, goal = (v.success_rate, config.stop_success) if final else (v.completion_rate, config.stage_completion)
            if goal is not None and rate >= goal:
                stage_solved = True
                record.solved = final

        def stop() -> bool:
            return record.total_steps >= config.budget_steps or stage_solved

        while not stop():
            run_batch(state, evaluator, config.batch_size, stop=stop, on_result=on_result)
            if not state.last_batch_improved:
                break
        if state.best is not None:
            stage.best_reward = state.best.reward
            stage.best_params = dict(state.best.params)
            prev_best = dict(state.best.params)
        if record.total_steps >= config.budget_steps:
            break
    return record


def run_experiment(config: ExperimentConfig, workers: int = 1, suite: Optional[Suite] = None) -> list[RunRecord]:
    """All repetitions of one experiment. Results do not depend on ``workers``."""
    reps = range(config.repetitions)
    if workers <= 1:
        return [run_repetition(config, r, suite) for r in reps]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_repetition, [config] * config.repetitions, reps))


def run_bebop(config: ExperimentConfig, repetition: int = 0, suite: Optional[Suite] = None) -> RunRecord:
    if config.mode == "cascaded":
        raise ValueError("use run_cascaded for cascaded mode")
    return run_repetition(config, repetition, suite)


def run_cascaded(config: ExperimentConfig, repetition: int = 0, suite: Optional[Suite] = None) -> RunRecord:
    return run_repetition(replace(config, mode="cascaded"), repetition, suite)
