"""Loading of the behavior library, task suite and experiment configs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np
import yaml

from .bt import ConditionAtom, ConfigurationError
from .envs import DoorSpec, ObjectSpec, Region, RewardTerm, TaskSpec
from .planner import BehaviorSpec, GoalSpec
from .space import REAL, Dimension

PRIMITIVES = ("reach", "grasp", "push", "open", "atomic")

MODES = ("bebop", "cascaded", "rf-classic-baseline", "random-search-baseline")


def atom_from_list(items) -> ConditionAtom:
    if isinstance(items, str):
        items = items.split()
    return ConditionAtom.from_tokens([str(x) for x in items])


def _behavior(name: str, raw: Mapping[str, Any]) -> BehaviorSpec:
    params = []
    for p in raw.get("params", []) or []:
        if isinstance(p, Mapping):
            params.append(Dimension(p["name"], p.get("kind", REAL), p.get("lower"), p.get("upper"), tuple(p.get("values", ()))))
        else:
            pname, lo, hi = p
            params.append(Dimension(str(pname), REAL, float(lo), float(hi)))
    return BehaviorSpec(
        name=name,
        args=tuple(raw.get("args", ()) or ()),
        pre=tuple(atom_from_list(a) for a in raw.get("pre", []) or []),
        post=tuple(atom_from_list(a) for a in raw.get("post", []) or []),
        params=tuple(params),
        target=raw.get("target"),
        expand=tuple((str(b), str(t)) for b, t in raw.get("expand", []) or []),
    )


def _tuple3(v, default=(0.0, 0.0, 0.0)):
    return tuple(default if v is None else (None if x is None else float(x) for x in v))


def _task_spec(name: str, goal: tuple[ConditionAtom, ...], raw: Mapping[str, Any]) -> TaskSpec:
    objects = []
    for o in raw.get("objects", []):
        o = dict(o)
        o["position"] = _tuple3(o["position"])
        if "spread" in o:
            o["spread"] = _tuple3(o["spread"])
        objects.append(ObjectSpec(**o))
    regions = {}
    for rname, r in (raw.get("regions") or {}).items():
        r = dict(r)
        if "offset" in r:
            r["offset"] = _tuple3(r["offset"])
        regions[rname] = Region(**r)
    door = None
    if raw.get("door"):
        d = dict(raw["door"])
        d["hinge"] = _tuple3(d["hinge"])
        if "spread" in d:
            d["spread"] = _tuple3(d["spread"])
        door = DoorSpec(**d)
    terms = tuple(RewardTerm(**t) for t in raw.get("reward_terms", []) or [])
    affordances = {
        prim: (tuple(objs), float(radius)) for prim, (objs, radius) in (raw.get("affordances") or {}).items()
    }
    scalars = {
        f.name: raw[f.name]
        for f in fields(TaskSpec)
        if f.name in raw and f.name not in ("objects", "regions", "door", "reward_terms", "affordances", "goal", "name")
    }
    if "gripper_home" in scalars:
        scalars["gripper_home"] = tuple(float(x) for x in scalars["gripper_home"])
    return TaskSpec(
        name=name,
        objects=tuple(objects),
        goal=goal,
        regions=regions,
        door=door,
        reward_terms=terms,
        affordances=affordances,
        **scalars,
    )


@dataclass(frozen=True)
class TaskEntry:
    name: str
    goal: GoalSpec
    library: dict[str, BehaviorSpec]
    env: TaskSpec


@dataclass(frozen=True)
class Suite:
    behaviors: dict[str, BehaviorSpec]
    tasks: dict[str, TaskEntry]

    def task(self, name: str) -> TaskEntry:
        key = name.lower()
        if key not in self.tasks:
            raise ConfigurationError(f"unknown task {name!r}; known: {sorted(self.tasks)}")
        return self.tasks[key]


def parse_suite(doc: Mapping[str, Any]) -> Suite:
    behaviors = {n: _behavior(n, b or {}) for n, b in (doc.get("behaviors") or {}).items()}
    tasks = {}
    for tname, t in (doc.get("tasks") or {}).items():
        goal_atoms = tuple(atom_from_list(a) for a in t["goal"])
        goal = GoalSpec(goal_atoms, frozenset(atom_from_list(a) for a in t.get("initial", []) or []))
        local = {n: _behavior(n, b or {}) for n, b in (t.get("behaviors") or {}).items()}
        library: dict[str, BehaviorSpec] = {}
        for n in t.get("use", []) or []:
            if n not in behaviors and n not in local:
                raise ConfigurationError(f"task {tname}: unknown behavior {n!r}")
            library[n] = local.get(n, behaviors.get(n))
        for n, b in local.items():
            library.setdefault(n, b)
        for n in PRIMITIVES:
            if n not in library and n in behaviors:
                library[n] = behaviors[n]
        tasks[tname.lower()] = TaskEntry(tname.lower(), goal, library, _task_spec(tname.lower(), goal_atoms, t["env"]))
    return Suite(behaviors, tasks)


def default_suite_text() -> str:
    return resources.files("bebop").joinpath("data/suite.yaml").read_text()


def load_suite(path: Optional[Union[str, Path]] = None) -> Suite:
    text = default_suite_text() if path is None else Path(path).read_text()
    return parse_suite(yaml.safe_load(text))


# --------------------------------------------------------------------------
# Experiments


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    mode: str = "bebop"
    master_seed: int = 0
    repetitions: int = 5
    n_training_seeds: int = 20
    n_validation_seeds: int = 20
    budget_steps: int = 300_000
    batch_size: int = 50
    beta: float = 1.0
    lam: Optional[float] = None
    lam_scale: float = 0.5
    n_initial: int = 10
    n_candidates: int = 2000
    n_trees: int = 50
    affordances: bool = True
    cascade_prior_strength: float = 10.0
    # stop once validation success reaches this rate (None: run to convergence)
    stop_success: Optional[float] = 1.0
    # cascaded mode: an intermediate stage ends once its subtree returns
    # Success in this share of validation episodes
    stage_completion: Optional[float] = 0.95
    suite: Optional[str] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.budget_steps < 0:
            raise ValueError("budget_steps must be >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @property
    def label(self) -> str:
        return self.name or f"{self.task}-{self.mode}"

    def seeds(self, repetition: int) -> tuple[list[int], list[int]]:
        """Training and validation seeds for one repetition.

        Training seeds are even and validation seeds odd, so the lists are
        disjoint by construction.
        """
        rng = np.random.default_rng([self.master_seed, repetition, 0x5EED])
        train = rng.choice(2**30, self.n_training_seeds, replace=False) * 2
        val = rng.choice(2**30, self.n_validation_seeds, replace=False) * 2 + 1
        return [int(s) for s in train], [int(s) for s in val]

    def bo_seed(self, repetition: int) -> int:
        return int(np.random.default_rng([self.master_seed, repetition, 0xB0]).integers(2**31))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def load_experiment(path: Union[str, Path]) -> list[ExperimentConfig]:
    """Read one config file. A ``modes`` list or a ``tasks`` list expands
    into one experiment per combination."""
    doc = yaml.safe_load(Path(path).read_text()) or {}
    return experiments_from_dict(doc, base=Path(path).parent)


def experiments_from_dict(doc: Mapping[str, Any], base: Optional[Path] = None) -> list[ExperimentConfig]:
    doc = dict(doc)
    tasks = doc.pop("tasks", None) or [doc.pop("task")]
    modes = doc.pop("modes", None) or [doc.pop("mode", "bebop")]
    doc.pop("task", None)
    doc.pop("mode", None)
    if doc.get("suite") and base is not None and not Path(doc["suite"]).is_absolute():
        doc["suite"] = str((base / doc["suite"]).resolve())
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
    return [ExperimentConfig(task=t, mode=m, **doc) for t in tasks for m in modes]
