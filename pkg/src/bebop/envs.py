"""Deterministic kinematic desk-scale manipulation tasks.

The robot is a free-floating gripper (x, y, z, yaw) that executes five
parameterised primitives. Each primitive is resolved to its end state in one
call and charged ``ceil(distance / step_length)`` steps against the episode
budget; the reward of the resulting state is paid for every one of those
steps. Objects move only by being carried, pushed, or dropped onto the
nearest support below them. A grasped door handle drives a double-swing
door (it opens towards whichever side it is pulled once unlatched) and
a grasped peg can only enter its hole when laterally aligned.

Observation layout (version ``OBS_LAYOUT_VERSION``)::

    gripper:        x, y, z, yaw, open
    each object:    x, y, z, yaw, grasped      (task object order)
    articulations:  door swing |angle|, handle angle   (door tasks only)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .bt import ConditionAtom, ConfigurationError, NodeStatus

OBS_LAYOUT_VERSION = 1

PRIMITIVE_ARITY = {"reach": 3, "grasp": 4, "push": 2, "open": 0, "atomic": 4}

WORLD = "world"


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    position: tuple[float, float, float]
    spread: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw_spread: float = 0.0
    half_height: float = 0.025
    half_width: float = 0.025
    graspable: bool = True
    # grasp yaw is compared modulo this angle; 0 means yaw does not matter
    yaw_symmetry: float = math.pi / 2
    kind: str = "block"  # block | peg | hole | tray | handle


@dataclass(frozen=True)
class Region:
    """Goal region for ``at`` conditions and a frame for primitives.

    Axes whose offset is ``None`` are unconstrained. ``min_z`` adds a lower
    bound on the object height.
    """

    anchor: Optional[str] = None
    offset: tuple[Optional[float], Optional[float], Optional[float]] = (None, None, None)
    tol: float = 0.02
    min_z: Optional[float] = None


@dataclass(frozen=True)
class DoorSpec:
    hinge: tuple[float, float, float]
    spread: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.2
    lever: float = 0.05
    latch: float = 0.2
    max_handle_angle: float = 1.2
    # a latched door still swings this far before the latch catches
    play: float = 0.05


@dataclass(frozen=True)
class RewardTerm:
    """One shaped progress term, weighted and bounded in [0, 1].

    kinds: ``height`` (lift fraction towards ``target``), ``angle``
    (articulation fraction towards ``target``), ``distance`` (planar
    ``1 - tanh(scale * d)`` to ``anchor``), ``depth`` (insertion fraction of
    ``target`` below the anchor's top, zero outside the hole).
    """

    kind: str
    object: str
    weight: float = 1.0
    target: float = 1.0
    anchor: Optional[str] = None
    scale: float = 10.0


@dataclass(frozen=True)
class TaskSpec:
    name: str
    objects: tuple[ObjectSpec, ...]
    goal: tuple[ConditionAtom, ...]
    grasp_object: str
    regions: Mapping[str, Region] = field(default_factory=dict)
    door: Optional[DoorSpec] = None
    reward_terms: tuple[RewardTerm, ...] = ()
    max_steps: int = 150
    gripper_home: tuple[float, float, float, float] = (0.0, -0.25, 0.25, 0.0)
    step_length: float = 0.02
    grasp_tol: float = 0.01
    yaw_tol: float = 0.2
    insert_tol: float = 0.003
    reach_scale: float = 40.0
    yaw_weight: float = 0.05
    grasp_bonus: float = 0.25
    # primitive -> (objects, radius); acting outside costs ``affordance_penalty`` per step
    affordances: Mapping[str, tuple[tuple[str, ...], float]] = field(default_factory=dict)
    affordance_penalty: float = 0.5

    def __post_init__(self):
        for o in self.objects:
            if any(s < 0 for s in o.spread) or o.yaw_spread < 0:
                raise ValueError(f"{self.name}: negative randomisation range on {o.name}")
        names = [o.name for o in self.objects]
        if self.grasp_object not in names:
            raise ValueError(f"{self.name}: unknown grasp object {self.grasp_object!r}")

    def object(self, name: str) -> ObjectSpec:
        for o in self.objects:
            if o.name == name:
                return o
        raise ConfigurationError(f"{self.name}: unknown object {name!r}")

    @property
    def success_reward(self) -> float:
        return 1.0 + self.grasp_bonus + sum(t.weight for t in self.reward_terms) + 1.0


@dataclass(frozen=True)
class PrimitiveCall:
    primitive: str
    target: str = WORLD
    params: tuple[float, ...] = ()

    def __post_init__(self):
        arity = PRIMITIVE_ARITY.get(self.primitive)
        if arity is None:
            raise ValueError(f"unknown primitive {self.primitive!r}")
        if len(self.params) != arity:
            raise ValueError(f"{self.primitive} takes {arity} parameters, got {len(self.params)}")


@dataclass
class EnvState:
    gripper: np.ndarray
    gripper_open: bool
    objects: dict[str, np.ndarray]
    grasped: Optional[str] = None
    grasp_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hinge: Optional[np.ndarray] = None
    handle_yaw0: float = 0.0
    door_angle: float = 0.0
    handle_angle: float = 0.0
    grasp_z: float = 0.0
    grasp_quality: float = 0.0
    steps: int = 0
    last_reward: float = 0.0

    def copy(self) -> "EnvState":
        return replace(
            self,
            gripper=self.gripper.copy(),
            objects={k: v.copy() for k, v in self.objects.items()},
            grasp_offset=self.grasp_offset.copy(),
            hinge=None if self.hinge is None else self.hinge.copy(),
        )

    def to_json(self) -> dict:
        return {
            "gripper": self.gripper.tolist(),
            "gripper_open": self.gripper_open,
            "objects": {k: v.tolist() for k, v in self.objects.items()},
            "grasped": self.grasped,
            "door_angle": self.door_angle,
            "handle_angle": self.handle_angle,
            "steps": self.steps,
        }


def _wrap(angle: float, period: float) -> float:
    """Signed distance of ``angle`` to the nearest multiple of ``period``."""
    if period <= 0:
        return 0.0
    return (angle + period / 2) % period - period / 2


class ManipulationEnv:
    """Environment for one task. Stateless apart from the task definition;
    all episode state lives in :class:`EnvState` values."""

    primitives = frozenset(PRIMITIVE_ARITY)

    def __init__(self, task: TaskSpec, affordances: bool = True):
        self.task = task
        self.affordances = affordances
        self._names = [o.name for o in task.objects]
        self.layout: dict[str, slice] = {"gripper": slice(0, 5)}
        pos = 5
        for name in self._names:
            self.layout[name] = slice(pos, pos + 5)
            pos += 5
        if task.door is not None:
            self.layout["door"] = slice(pos, pos + 1)
            self.layout["handle_angle"] = slice(pos + 1, pos + 2)
            pos += 2
        self.obs_size = pos

    # ------------------------------------------------------------------ reset

    def reset(self, seed: int) -> tuple[EnvState, np.ndarray]:
        rng = np.random.Generator(np.random.Philox(key=int(seed)))
        t = self.task
        objects = {}
        hinge = None
        yaw0 = 0.0
        if t.door is not None:
            d = t.door
            hinge = np.array(d.hinge) + rng.uniform(-1, 1, 3) * np.array(d.spread)
        for o in t.objects:
            xyz = np.array(o.position) + rng.uniform(-1, 1, 3) * np.array(o.spread)
            yaw = rng.uniform(-1, 1) * o.yaw_spread
            objects[o.name] = np.array([*xyz, yaw])
            if o.kind == "handle":
                yaw0 = yaw
        state = EnvState(
            gripper=np.array(t.gripper_home, dtype=float),
            gripper_open=True,
            objects=objects,
            hinge=hinge,
            handle_yaw0=yaw0,
        )
        if hinge is not None:
            self._place_handle(state)
        state.last_reward = self.reward(state)
        return state, self.observe(state)

    # ---------------------------------------------------------- observation

    def observe(self, state: EnvState) -> np.ndarray:
        parts = [state.gripper, [1.0 if state.gripper_open else 0.0]]
        for name in self._names:
            parts.append(state.objects[name])
            parts.append([1.0 if state.grasped == name else 0.0])
        if self.task.door is not None:
            parts.append([abs(state.door_angle), state.handle_angle])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def _pose(self, obs: np.ndarray, name: str) -> np.ndarray:
        if name not in self._names:
            raise ConfigurationError(f"{self.task.name}: unknown object {name!r}")
        return obs[self.layout[name]]

    def frame(self, obs: np.ndarray, name: str) -> np.ndarray:
        """Origin of a primitive target frame: object, region or world."""
        if name == WORLD:
            return np.zeros(3)
        if name in self._names:
            return self._pose(obs, name)[:3].copy()
        region = self.task.regions.get(name)
        if region is None:
            raise ConfigurationError(f"{self.task.name}: unknown frame {name!r}")
        base = np.zeros(3) if region.anchor is None else self._pose(obs, region.anchor)[:3]
        off = np.array([0.0 if v is None else v for v in region.offset])
        return base + off

    # ----------------------------------------------------------- conditions

    def check(self, atom: ConditionAtom, obs: np.ndarray) -> bool:
        p = atom.predicate
        if p == "grasped":
            return self._pose(obs, atom.args[0])[4] > 0.5
        if p == "at":
            obj, region_name = atom.args
            region = self.task.regions.get(region_name)
            if region is None:
                raise ConfigurationError(f"{self.task.name}: unknown region {region_name!r}")
            pos = self._pose(obs, obj)[:3]
            base = np.zeros(3) if region.anchor is None else self._pose(obs, region.anchor)[:3]
            axes = [i for i, v in enumerate(region.offset) if v is not None]
            ok = True
            if axes:
                goal = base[axes] + np.array([region.offset[i] for i in axes])
                ok = float(np.linalg.norm(pos[axes] - goal)) <= region.tol
            if region.min_z is not None:
                ok = ok and pos[2] >= region.min_z
            return bool(ok)
        if p == "angle>":
            (name,) = atom.args
            if name == "door" and self.task.door is not None:
                value = obs[self.layout["door"]][0]
            elif name == "handle" and self.task.door is not None:
                value = obs[self.layout["handle_angle"]][0]
            else:
                raise ConfigurationError(f"{self.task.name}: no articulation {name!r}")
            return bool(value > atom.threshold)
        if p == "aligned":
            obj, target = atom.args
            d = self._pose(obs, obj)[:2] - self._pose(obs, target)[:2]
            return bool(np.linalg.norm(d) <= self.task.insert_tol)
        raise ConfigurationError(f"unknown condition {p!r}")

    def eval_condition(self, atom: ConditionAtom, obs: np.ndarray) -> NodeStatus:
        return NodeStatus.SUCCESS if self.check(atom, obs) else NodeStatus.FAILURE

    def success(self, state: EnvState) -> bool:
        obs = self.observe(state)
        return all(self.check(a, obs) for a in self.task.goal)

    # --------------------------------------------------------------- reward

    def reward(self, state: EnvState) -> float:
        t = self.task
        if self.success(state):
            return t.success_reward
        g = t.grasp_object
        if state.grasped == g:
            # a centred grasp earns the full bonus, one at the tolerance edge half
            r = 1.0 + t.grasp_bonus * (0.5 + 0.5 * state.grasp_quality)
        else:
            obj = state.objects[g]
            d = np.linalg.norm(state.gripper[:3] - obj[:3])
            yaw_err = _wrap(state.gripper[3] - obj[3], t.object(g).yaw_symmetry)
            r = 1.0 - math.tanh(t.reach_scale * math.hypot(d, t.yaw_weight * yaw_err))
        for term in t.reward_terms:
            r += term.weight * self._progress(state, term)
        return float(r)

    def _progress(self, state: EnvState, term: RewardTerm) -> float:
        if term.kind == "angle":
            value = abs(state.door_angle) if term.object == "door" else state.handle_angle
            return float(np.clip(value / term.target, 0.0, 1.0))
        obj = state.objects[term.object]
        spec = self.task.object(term.object)
        if term.kind == "height":
            z0 = spec.position[2]
            return float(np.clip((obj[2] - z0) / (term.target - z0), 0.0, 1.0))
        anchor = state.objects[term.anchor]
        if term.kind == "distance":
            return 1.0 - math.tanh(term.scale * float(np.linalg.norm(obj[:2] - anchor[:2])))
        if term.kind == "depth":
            # only counts inside the hole, not beside the block
            if np.linalg.norm(obj[:2] - anchor[:2]) > self.task.insert_tol:
                return 0.0
            bottom = obj[2] - spec.half_height
            return float(np.clip((anchor[2] - bottom) / term.target, 0.0, 1.0))
        raise ValueError(f"unknown reward term {term.kind!r}")

    # ------------------------------------------------------------- dynamics

    def step(
        self, state: EnvState, call: PrimitiveCall, affordances: Optional[bool] = None
    ) -> tuple[EnvState, float, bool]:
        """Execute one primitive. Returns (new state, summed reward, done)."""
        t = self.task
        s = state.copy()
        budget = t.max_steps - s.steps
        if budget <= 0:
            return s, 0.0, True
        obs = self.observe(s)
        prim = call.primitive
        p = np.asarray(call.params, dtype=float)
        if prim in ("reach", "grasp", "atomic"):
            acting = self.frame(obs, call.target) + p[:3]
        elif prim == "push":
            acting = self.frame(obs, call.target)
        else:
            acting = s.gripper[:3].copy()

        if prim == "reach":
            goal = acting
            if s.grasped is not None and t.object(s.grasped).kind != "handle":
                # while carrying, the offset places the object, not the fingers
                goal = acting - s.grasp_offset
            n = self._move(s, goal, budget)
        elif prim == "grasp":
            n = self._grasp(s, call.target, acting, p[3], budget)
        elif prim == "push":
            n = self._push(s, call.target, p[:2], budget)
        elif prim == "open":
            self._release(s)
            s.gripper_open = True
            n = 1
        else:
            n = self._atomic(s, acting, p[3])

        n = min(n, budget)
        use_aff = self.affordances if affordances is None else affordances
        per_step = self.reward(s)
        if use_aff and not self._inside_affordance(prim, acting, obs):
            per_step -= t.affordance_penalty
        s.steps += n
        s.last_reward = per_step
        return s, per_step * n, s.steps >= t.max_steps

    def _inside_affordance(self, prim: str, acting: np.ndarray, obs: np.ndarray) -> bool:
        rule = self.task.affordances.get(prim)
        if rule is None:
            return True
        names, radius = rule
        return any(np.linalg.norm(acting - self.frame(obs, n)) <= radius for n in names)

    def _n_steps(self, dist: float) -> int:
        return max(1, math.ceil(dist / self.task.step_length - 1e-9))

    def _move(self, s: EnvState, target: np.ndarray, budget: int) -> int:
        """Straight-line gripper motion with carried-object constraints."""
        start = s.gripper[:3].copy()
        n = self._n_steps(float(np.linalg.norm(target - start)))
        if n > budget:
            target = start + (target - start) * (budget / n)
        if s.grasped is None:
            s.gripper[:3] = target
            s.gripper[2] = max(s.gripper[2], 0.0)
        elif self.task.object(s.grasped).kind == "handle":
            self._drive_door(s, target)
        elif self.task.object(s.grasped).kind == "peg" and self._hole() is not None:
            self._drive_peg(s, start, target)
        else:
            spec = self.task.object(s.grasped)
            obj = target + s.grasp_offset
            # a carried block stops on top of whatever lies under it
            obj[2] = max(obj[2], self._support(s, s.grasped, obj[:2]) + spec.half_height)
            s.objects[s.grasped][:3] = obj
            s.gripper[:3] = obj - s.grasp_offset
        return n

    def _grasp(self, s: EnvState, name: str, target: np.ndarray, yaw: float, budget: int) -> int:
        self._release(s)
        s.gripper_open = True
        n = self._move(s, target, budget)
        s.gripper[3] = yaw
        s.gripper_open = False
        if n > budget or name not in self._names:
            return n
        spec = self.task.object(name)
        obj = s.objects[name]
        dist = float(np.linalg.norm(s.gripper[:3] - obj[:3]))
        yaw_err = abs(_wrap(yaw - obj[3], spec.yaw_symmetry))
        if spec.graspable and dist <= self.task.grasp_tol and yaw_err <= self.task.yaw_tol:
            s.grasped = name
            s.grasp_offset = obj[:3] - s.gripper[:3]
            s.grasp_z = s.gripper[2]
            s.grasp_quality = 1.0 - max(dist / self.task.grasp_tol, yaw_err / self.task.yaw_tol)
        return n

    def _push(self, s: EnvState, name: str, goal_xy: np.ndarray, budget: int) -> int:
        self._release(s)
        if name not in self._names:
            raise ConfigurationError(f"{self.task.name}: cannot push {name!r}")
        spec = self.task.object(name)
        obj = s.objects[name]
        delta = goal_xy - obj[:2]
        dist = float(np.linalg.norm(delta))
        direction = delta / dist if dist > 0 else np.array([1.0, 0.0])
        standoff = spec.half_width + 0.02
        approach = np.array([*(obj[:2] - direction * standoff), obj[2]])
        n1 = self._move(s, approach, budget)
        if n1 >= budget or not spec.graspable:
            return n1
        n2 = self._n_steps(dist) if dist > 0 else 0
        frac = min(1.0, (budget - n1) / n2) if n2 else 0.0
        obj[:2] = obj[:2] + delta * frac
        s.gripper[:2] = obj[:2] - direction * standoff
        return n1 + n2

    def _atomic(self, s: EnvState, target: np.ndarray, yaw: float) -> int:
        delta = target - s.gripper[:3]
        norm = float(np.linalg.norm(delta))
        if norm > self.task.step_length:
            delta = delta * (self.task.step_length / norm)
        self._move(s, s.gripper[:3] + delta, 1)
        s.gripper[3] += float(np.clip(yaw - s.gripper[3], -0.1, 0.1))
        return 1

    def _release(self, s: EnvState) -> None:
        name = s.grasped
        if name is None:
            return
        s.grasped = None
        s.grasp_quality = 0.0
        spec = self.task.object(name)
        if spec.kind == "handle":
            return
        obj = s.objects[name]
        obj[2] = self._support(s, name, obj[:2]) + spec.half_height

    def _support(self, s: EnvState, name: str, xy: np.ndarray) -> float:
        """Height of the highest surface under ``xy`` (table at 0). A peg
        aligned with its hole is not supported by the hole block."""
        spec = self.task.object(name)
        best = 0.0
        for other in self.task.objects:
            if other.name == name or other.kind in ("handle", "tray"):
                continue
            pos = s.objects[other.name]
            top = pos[2] + (other.half_height if other.kind != "hole" else 0.0)
            lat = xy - pos[:2]
            if np.any(np.abs(lat) > other.half_width):
                continue
            if other.kind == "hole" and spec.kind == "peg" and np.linalg.norm(lat) <= self.task.insert_tol:
                continue
            best = max(best, top)
        return best

    # door ---------------------------------------------------------------

    def _place_handle(self, s: EnvState) -> None:
        d = self.task.door
        for o in self.task.objects:
            if o.kind == "handle":
                a = s.door_angle
                pos = s.hinge + d.radius * np.array([math.cos(a), -math.sin(a), 0.0])
                s.objects[o.name][:3] = pos
                s.objects[o.name][3] = s.handle_yaw0 - a

    def _drive_door(self, s: EnvState, target: np.ndarray) -> None:
        d = self.task.door
        drop = float(np.clip(s.grasp_z - target[2], 0.0, d.lever * d.max_handle_angle))
        s.handle_angle = drop / d.lever
        rel = target[:2] - s.hinge[:2]
        free = s.handle_angle >= d.latch or abs(s.door_angle) > d.play
        limit = math.pi / 2 if free else d.play
        s.door_angle = float(np.clip(math.atan2(-rel[1], rel[0]), -limit, limit))
        self._place_handle(s)
        handle = s.objects[s.grasped]
        s.gripper[:2] = handle[:2] - s.grasp_offset[:2]
        s.gripper[2] = s.grasp_z - drop
        s.gripper[3] = handle[3] + (s.gripper[3] - handle[3])

    # peg ----------------------------------------------------------------

    def _hole(self) -> Optional[ObjectSpec]:
        for o in self.task.objects:
            if o.kind == "hole":
                return o
        return None

    def _drive_peg(self, s: EnvState, start_grip: np.ndarray, target: np.ndarray) -> None:
        peg_spec = self.task.object(s.grasped)
        hole_spec = self._hole()
        hole = s.objects[hole_spec.name]
        top = hole[2]
        half = peg_spec.half_height
        tol = self.task.insert_tol
        start = start_grip + s.grasp_offset
        end = target + s.grasp_offset

        def lateral(p):
            return p[:2] - hole[:2]

        def clamp_in_hole(p):
            lat = lateral(p)
            r = float(np.linalg.norm(lat))
            if r > tol:
                p[:2] = hole[:2] + lat * (tol / r)
            p[2] = max(p[2], half)
            return p

        inside_start = start[2] - half < top - 1e-9 and np.linalg.norm(lateral(start)) <= tol + 1e-9
        over_block = np.all(np.abs(lateral(end)) <= hole_spec.half_width)
        if inside_start:
            if end[2] - half < top:
                end = clamp_in_hole(end)
        elif end[2] - half < top and over_block:
            sb, eb = start[2] - half, end[2] - half
            if sb < top - 1e-9:
                # arriving from the side: the block pushes the peg onto its top
                end[2] = top + half
            else:
                frac = (sb - top) / (sb - eb) if sb > eb else 1.0
                crossing = start + frac * (end - start)
                if np.linalg.norm(lateral(crossing)) <= tol:
                    end = clamp_in_hole(end)
                else:
                    end[2] = top + half
        end[2] = max(end[2], half)
        s.objects[s.grasped][:3] = end
        s.gripper[:3] = end - s.grasp_offset
