"""Episode rollouts, adaptive multi-episode evaluation and validation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .bt import BTNode, NodeStatus, TickContext, tick
from .envs import ManipulationEnv, PrimitiveCall

FAILURE_PENALTY = -500.0

SUCCESS = "success"
FAILURE = "failure"
BUDGET = "budget"

STOP_PROBABILITY = "probability-below-threshold"
STOP_MAX = "reached-max-episodes"
STOP_ABORTED = "aborted"


@dataclass
class EpisodeResult:
    seed: int
    steps: int
    raw_reward: float
    status: str  # success | failure | budget (tree status at the end)
    success: bool  # task goal satisfied in the final state
    last_step_reward: float = 0.0
    processed_reward: float = 0.0


def _status_name(status) -> str:
    if isinstance(status, NodeStatus):
        return {NodeStatus.SUCCESS: SUCCESS, NodeStatus.FAILURE: FAILURE}.get(status, BUDGET)
    return str(status).lower()


def process_episode_reward(
    raw: float,
    steps: int,
    max_steps: int,
    status,
    last_step_reward: float,
    penalty: float = FAILURE_PENALTY,
) -> float:
    """Extrapolate an early stop to the full budget and penalise failure.

    When the tree ends before ``max_steps`` the last per-step reward is
    assumed for the remaining steps. A Failure status adds ``penalty``.
    """
    status = _status_name(status)
    out = float(raw)
    if status in (SUCCESS, FAILURE) and steps < max_steps:
        out += (max_steps - steps) * last_step_reward
    if status == FAILURE:
        out += penalty
    return out


def run_episode(
    tree: BTNode,
    params: Mapping[str, float],
    env: ManipulationEnv,
    seed: int,
    affordances: Optional[bool] = None,
    penalty: float = FAILURE_PENALTY,
    trace: Optional[IO[str]] = None,
) -> EpisodeResult:
    """Tick ``tree`` until it stops or the step budget runs out.

    With ``trace`` set, one JSON line (step, state, reward) is written per
    primitive.
    """
    state, obs = env.reset(seed)
    max_steps = env.task.max_steps
    executed: set[int] = set()
    raw = 0.0
    status = BUDGET
    while state.steps < max_steps:
        current = obs
        ctx = TickContext(
            current,
            params,
            check=lambda atom: env.check(atom, current),
            behaviors=env.primitives,
            executed=executed,
        )
        result = tick(tree, ctx)
        if result is not NodeStatus.RUNNING:
            status = _status_name(result)
            break
        node, values = ctx.emitted
        state, reward, _ = env.step(state, PrimitiveCall(node.behavior, node.target, values), affordances)
        raw += reward
        obs = env.observe(state)
        if trace is not None:
            trace.write(json.dumps({"step": state.steps, "state": state.to_json(), "reward": reward}) + "\n")
    out = EpisodeResult(
        seed=int(seed),
        steps=state.steps,
        raw_reward=raw,
        status=status,
        success=env.success(state),
        last_step_reward=state.last_reward,
    )
    out.processed_reward = process_episode_reward(raw, state.steps, max_steps, status, state.last_reward, penalty)
    return out


def probability_outperforms(rewards: Sequence[float], best: float) -> float:
    """P(true mean > ``best``) under a normal model of the sample mean.

    Uses the sample standard deviation (ddof=1). With zero spread the
    answer is the indicator ``mean > best``.
    """
    r = np.asarray(rewards, dtype=float)
    if len(r) < 2:
        raise ValueError("need at least two episodes")
    if best == -math.inf:
        return 1.0
    m = float(r.mean())
    s = float(r.std(ddof=1))
    if s == 0.0:
        return 1.0 if m > best else 0.0
    return float(stats.norm.sf((best - m) / (s / math.sqrt(len(r)))))


@dataclass(frozen=True)
class AdaptiveConfig:
    min_episodes: int = 3
    max_episodes: int = 20
    threshold: float = 0.05


@dataclass
class PolicyEvaluation:
    params: dict
    episodes: list[EpisodeResult] = field(default_factory=list)
    aggregate: float = -math.inf
    stop_reason: str = STOP_MAX
    probabilities: list[float] = field(default_factory=list)
    aborted: bool = False
    error: Optional[str] = None

    @property
    def steps(self) -> int:
        return sum(e.steps for e in self.episodes)

    @property
    def variance(self) -> float:
        r = [e.processed_reward for e in self.episodes]
        return float(np.var(r, ddof=1)) if len(r) > 1 else 0.0

    @property
    def success_rate(self) -> float:
        return float(np.mean([e.success for e in self.episodes])) if self.episodes else 0.0


def adaptive(
    run_one: Callable[[int], EpisodeResult],
    seeds: Sequence[int],
    best: float,
    params: Optional[dict] = None,
    config: AdaptiveConfig = AdaptiveConfig(),
) -> PolicyEvaluation:
    """Run episodes on ``seeds`` in order until the candidate is unlikely
    to beat ``best`` or ``max_episodes`` is reached."""
    if len(seeds) < config.max_episodes:
        raise ValueError(f"need at least {config.max_episodes} seeds, got {len(seeds)}")
    ev = PolicyEvaluation(params=dict(params or {}))
    for seed in seeds[: config.max_episodes]:
        try:
            ev.episodes.append(run_one(seed))
        except Exception as exc:  # environment fault: give up on the candidate
            done = [e.processed_reward for e in ev.episodes]
            ev.aggregate = (float(np.mean(done)) if done else 0.0) + FAILURE_PENALTY
            ev.stop_reason = STOP_ABORTED
            ev.aborted = True
            ev.error = f"{type(exc).__name__}: {exc}"
            return ev
        n = len(ev.episodes)
        if n >= config.min_episodes:
            p = probability_outperforms([e.processed_reward for e in ev.episodes], best)
            ev.probabilities.append(p)
            if p <= config.threshold and n < config.max_episodes:
                ev.stop_reason = STOP_PROBABILITY
                break
    ev.aggregate = float(np.mean([e.processed_reward for e in ev.episodes]))
    if ev.stop_reason != STOP_PROBABILITY:
        ev.stop_reason = STOP_MAX
    return ev


def evaluate_adaptive(
    tree: BTNode,
    params: Mapping[str, float],
    env: ManipulationEnv,
    seeds: Sequence[int],
    best: float,
    config: AdaptiveConfig = AdaptiveConfig(),
) -> PolicyEvaluation:
    """Adaptive evaluation of one parameter set on the fixed training seeds."""
    return adaptive(
        lambda s: run_episode(tree, params, env, s),
        seeds,
        best,
        params=dict(params),
        config=config,
    )


@dataclass
class ValidationResult:
    mean_reward: float
    success_rate: float
    episodes: list[EpisodeResult]

    @property
    def steps(self) -> int:
        return sum(e.steps for e in self.episodes)

    @property
    def completion_rate(self) -> float:
        """Share of episodes in which the tree itself returned Success."""
        return float(np.mean([e.status == SUCCESS for e in self.episodes]))


def validate(
    tree: BTNode,
    params: Mapping[str, float],
    env: ManipulationEnv,
    seeds: Sequence[int],
    training_seeds: Iterable[int] = (),
    n_episodes: int = 20,
) -> ValidationResult:
    """Held-out evaluation: raw reward, no affordance penalty, no failure penalty."""
    seeds = list(seeds)[:n_episodes]
    if len(seeds) < n_episodes:
        raise ValueError(f"need {n_episodes} validation seeds, got {len(seeds)}")
    if set(seeds) & set(training_seeds):
        raise ValueError("validation seeds overlap training seeds")
    eps = [run_episode(tree, params, env, s, affordances=False, penalty=0.0) for s in seeds]
    return ValidationResult(
        mean_reward=float(np.mean([e.raw_reward for e in eps])),
        success_rate=float(np.mean([e.success for e in eps])),
        episodes=eps,
    )


EVALUATION_LOG_FIELDS = ["candidate", "seed", "steps", "raw_reward", "processed_reward", "stop_reason"]


def write_evaluation_log(evaluations: Sequence[PolicyEvaluation], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVALUATION_LOG_FIELDS)
        for i, ev in enumerate(evaluations):
            for e in ev.episodes:
                w.writerow([i, e.seed, e.steps, repr(e.raw_reward), repr(e.processed_reward), ev.stop_reason])
