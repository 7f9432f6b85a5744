"""Sequential Bayesian optimization over mixed spaces with a forest surrogate."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import surrogate
from .space import ParamSpace, ParamVector
from .surrogate import Forest, ForestConfig


@dataclass(frozen=True)
class BOConfig:
    beta: float = 1.0
    acquisition: str = "ucb"  # "ucb" | "ei"
    uncertainty: str = "augmented"  # "augmented" | "classic"
    strategy: str = "bo"  # "bo" | "random"
    n_initial: int = 10
    n_candidates: int = 2000
    prior_fraction: float = 0.5
    # share of candidates drawn around the best points, split evenly over
    # the move kinds: "joint" Gaussian moves of every coordinate, "single"
    # Gaussian moves of one coordinate, "swap" one coordinate redrawn
    local_fraction: float = 0.1
    local_moves: tuple[tuple[str, float], ...] = (("joint", 0.1), ("joint", 0.02), ("single", 0.05), ("swap", 0.0))
    n_local_centres: int = 5
    n_refine: int = 10
    refine_widths: tuple[float, ...] = (0.05, 0.01, 0.002)
    refine_points: int = 11
    # prior-weighted acquisition: the (non-negative) acquisition is scaled by
    # prior(x) ** (prior_weight / n_observations), so priors steer early
    # suggestions and fade as data accumulates; 0 turns it off
    prior_weight: float = 10.0
    forest: ForestConfig = field(default_factory=ForestConfig)


@dataclass
class Observation:
    params: ParamVector
    reward: float
    episodes: int = 1
    steps: int = 0


@dataclass
class OptState:
    space: ParamSpace
    config: BOConfig = field(default_factory=BOConfig)
    seed: int = 0
    history: list[Observation] = field(default_factory=list)
    best: Optional[Observation] = None
    iteration: int = 0
    last_batch_improved: Optional[bool] = None

    @property
    def best_reward(self) -> float:
        return self.best.reward if self.best is not None else -math.inf

    def rng(self, tag: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.iteration, tag])

    def tell(self, params: ParamVector, result) -> bool:
        """Record an evaluation; returns True when it is a new best.

        ``result`` is a float or any object with an ``aggregate`` attribute
        (and optionally ``episodes``/``steps``).
        """
        if isinstance(result, (int, float)):
            obs = Observation(dict(params), float(result))
        else:
            episodes = getattr(result, "episodes", 1)
            obs = Observation(
                dict(params),
                float(result.aggregate),
                len(episodes) if isinstance(episodes, Sequence) else int(episodes),
                int(getattr(result, "steps", 0)),
            )
        self.history.append(obs)
        self.iteration += 1
        if obs.reward > self.best_reward:
            self.best = obs
            return True
        return False

    def encoded_history(self) -> tuple[np.ndarray, np.ndarray]:
        X = self.space.encode_many([o.params for o in self.history])
        y = np.array([o.reward for o in self.history], dtype=float)
        return X, y

    def fit_surrogate(self) -> Forest:
        X, y = self.encoded_history()
        return surrogate.fit(X, y, self.config.forest, seed=self.seed * 100_003 + self.iteration)


def suggest_initial(space: ParamSpace, k: int, seed: int) -> list[ParamVector]:
    """``k`` points drawn from the dimension priors (uniform where there is none).

    When the space has priors the first point sits on the prior modes, so a
    known good setting is always tried once.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng([seed, 0xD0E])
    U = space.sample_encoded(rng, k, use_prior=True)
    if space.has_priors:
        for d, (lo, hi) in zip(space.dims, space.column_ranges()):
            if d.prior is not None:
                U[0, lo:hi] = d.encode(d.prior.mode)
    return [space.decode(u) for u in U]


def acquisition(forest: Forest, U: np.ndarray, config: BOConfig, best: float) -> np.ndarray:
    mean, std = forest.predict(U, config.uncertainty)
    if config.acquisition == "ucb":
        return mean + config.beta * std
    if config.acquisition == "ei":
        imp = mean - best
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(std > 0, imp / std, 0.0)
        ei = imp * stats.norm.cdf(z) + std * stats.norm.pdf(z)
        return np.where(std > 0, ei, np.maximum(imp, 0.0))
    raise ValueError(f"unknown acquisition {config.acquisition!r}")


def _score(state: OptState, forest: Forest, U: np.ndarray) -> np.ndarray:
    """Acquisition of encoded rows, weighted by the space priors if any."""
    cfg, space = state.config, state.space
    a = acquisition(forest, U, cfg, state.best_reward)
    if not (cfg.prior_weight > 0 and space.has_priors and state.history):
        return a
    # UCB is bounded below by the smallest observed reward (forest means are
    # averages of observations, std >= 0); EI is already non-negative
    floor = min(o.reward for o in state.history) if cfg.acquisition == "ucb" else 0.0
    w = np.exp(space.log_prior(U) * cfg.prior_weight / len(state.history))
    return (a - floor) * w


def _candidates(state: OptState, rng: np.random.Generator, Xh: np.ndarray) -> np.ndarray:
    cfg, space = state.config, state.space
    n = cfg.n_candidates
    parts = []
    n_local = int(cfg.local_fraction * n) if len(Xh) else 0
    if n_local:
        rewards = np.array([o.reward for o in state.history])
        top = np.argsort(-rewards, kind="stable")[: cfg.n_local_centres]
        centres = Xh[top[np.arange(n_local) % len(top)]]
        # moves keep the order of local_moves so that ties in the acquisition
        # go to the joint moves around the incumbent
        kinds = np.sort(rng.integers(0, len(cfg.local_moves), n_local))
        local = centres.copy()
        d = centres.shape[1]
        for k, (kind, scale) in enumerate(cfg.local_moves):
            rows = np.flatnonzero(kinds == k)
            if not len(rows) or not d:
                continue
            if kind == "joint":
                local[rows] += rng.normal(size=(len(rows), d)) * scale
            elif kind == "single":
                local[rows, rng.integers(0, d, len(rows))] += rng.normal(size=len(rows)) * scale
            elif kind == "swap":
                local[rows, rng.integers(0, d, len(rows))] = rng.random(len(rows))
            else:
                raise ValueError(f"unknown local move {kind!r}")
        parts.append(local)
    rest = n - n_local
    n_prior = int(round(cfg.prior_fraction * rest)) if space.has_priors else 0
    if n_prior:
        parts.append(space.sample_encoded(rng, n_prior, use_prior=True))
    parts.append(space.sample_encoded(rng, rest - n_prior, use_prior=False))
    return space.snap_many(np.vstack(parts))


def _refine(state: OptState, forest: Forest, starts: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Greedy coordinate search: each round tries a line of values along every
    coordinate of every start and keeps the single best move per start."""
    cfg, space = state.config, state.space
    cols = space.continuous_columns()
    blocks = space.categorical_blocks()
    X, s = starts.copy(), scores.copy()
    for width in cfg.refine_widths:
        moves = []
        owners = []
        offsets = np.linspace(-width, width, cfg.refine_points)
        for i, x in enumerate(X):
            for c in cols:
                trial = np.repeat(x[None, :], len(offsets), axis=0)
                trial[:, c] = np.clip(x[c] + offsets, 0.0, 1.0)
                moves.append(trial)
                owners += [i] * len(offsets)
            for lo, hi in blocks:
                trial = np.repeat(x[None, :], hi - lo, axis=0)
                trial[:, lo:hi] = np.eye(hi - lo) / math.sqrt(2.0)
                moves.append(trial)
                owners += [i] * (hi - lo)
        if not moves:
            break
        M = space.snap_many(np.vstack(moves))
        a = _score(state, forest, M)
        owners_arr = np.asarray(owners)
        for i in range(len(X)):
            sel = np.flatnonzero(owners_arr == i)
            j = sel[np.argmax(a[sel])]
            if a[j] > s[i]:
                X[i], s[i] = M[j], a[j]
    return X, s


def suggest_next(state: OptState, forest: Forest) -> ParamVector:
    """Approximate argmax of the acquisition over the space.

    Candidates are local perturbations of the best observations, prior
    samples and uniform samples, in that order (ties keep the earliest).
    The top ``n_refine`` are polished by coordinate search. A suggestion
    equal to an evaluated point is perturbed until it is new.
    """
    cfg, space = state.config, state.space
    rng = state.rng(1)
    Xh, _ = state.encoded_history()
    C = _candidates(state, rng, Xh)
    a = _score(state, forest, C)
    top = np.argsort(-a, kind="stable")[: cfg.n_refine]
    X, s = _refine(state, forest, C[top], a[top])
    u = X[int(np.argmax(s))]
    for _ in range(100):
        if not len(Xh) or np.min(np.abs(Xh - u).max(axis=1)) > 1e-12:
            break
        u = space.snap_many((u + rng.normal(scale=1e-3, size=u.shape))[None, :])[0]
    return space.decode(u)


def ask(state: OptState) -> ParamVector:
    cfg = state.config
    if cfg.strategy == "random":
        return state.space.sample(state.rng(2), 1, use_prior=False)[0]
    if cfg.strategy != "bo":
        raise ValueError(f"unknown strategy {cfg.strategy!r}")
    if len(state.history) < cfg.n_initial:
        design = suggest_initial(state.space, cfg.n_initial, state.seed)
        return design[len(state.history)]
    return suggest_next(state, state.fit_surrogate())


Evaluator = Callable[[ParamVector], Union[float, object]]


def run_batch(
    state: OptState,
    evaluator: Evaluator,
    batch_size: int = 50,
    stop: Optional[Callable[[], bool]] = None,
    on_result: Optional[Callable[[ParamVector, object, bool], None]] = None,
) -> OptState:
    """Run ``batch_size`` ask/evaluate/tell cycles (fewer if ``stop`` fires).

    Sets ``state.last_batch_improved``. Exceptions from ``evaluator``
    propagate; everything told before the failure stays in the history.
    """
    before = state.best_reward
    for _ in range(batch_size):
        if stop is not None and stop():
            break
        params = ask(state)
        result = evaluator(params)
        improved = state.tell(params, result)
        if on_result is not None:
            on_result(params, result, improved)
    state.last_batch_improved = state.best_reward > before
    return state


def write_trace(state: OptState, path) -> None:
    """Optimization trace: iteration, params, aggregate reward, episodes, best-so-far."""
    best = -math.inf
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "params", "reward", "episodes", "best_so_far"])
        for i, o in enumerate(state.history):
            best = max(best, o.reward)
            w.writerow([i, json.dumps(o.params, sort_keys=True), repr(o.reward), o.episodes, repr(best)])
