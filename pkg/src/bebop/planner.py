"""Backchaining planner producing trimmed reactive behavior trees.

Behaviors are schemas over ``?variables``. A goal atom is matched against a
behavior's postconditions; the resulting bindings ground its
preconditions, its target and its expansion. Planning recurses through
unmet preconditions, the tree is trimmed, composite and alias behaviors are
expanded into primitives, and finally every primitive parameter becomes a
named free slot ``{primitive}{k}_{param}``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .bt import (
    ACTION,
    CONDITION,
    FALLBACK,
    Action,
    BTNode,
    Condition,
    ConditionAtom,
    Fallback,
    Seq,
    NodeStatus,
    iter_nodes,
    TickContext,
    renumber,
    tick,
    validate_tree,
)
from .bt import free_parameters as _free_parameters
from .space import Dimension, ParamSpace

WORLD = "world"


class PlanningError(RuntimeError):
    """The goal cannot be reached or the library is cyclic."""


@dataclass(frozen=True)
class BehaviorSpec:
    """Planner view of a behavior.

    ``expand`` lists ``(behavior, target)`` pairs: one entry makes this an
    alias of another behavior, several make it a composite that becomes a
    Sequence. Primitive behaviors have no ``expand`` and own ``params``.
    """

    name: str
    args: tuple[str, ...] = ()
    pre: tuple[ConditionAtom, ...] = ()
    post: tuple[ConditionAtom, ...] = ()
    params: tuple[Dimension, ...] = ()
    target: Optional[str] = None
    expand: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        for d in self.params:
            if d.lower is not None and not d.lower < d.upper:
                raise ValueError(f"{self.name}.{d.name}: need lower < upper")
        if self.expand and self.params:
            raise ValueError(f"{self.name}: composite behaviors take their parameters from their parts")

    @property
    def is_primitive(self) -> bool:
        return not self.expand

    @property
    def target_template(self) -> str:
        if self.target is not None:
            return self.target
        return self.args[0] if self.args else WORLD


@dataclass(frozen=True)
class GoalSpec:
    goal: tuple[ConditionAtom, ...]
    initial: frozenset[ConditionAtom] = field(default_factory=frozenset)

    def __post_init__(self):
        if len(set(self.goal)) != len(self.goal):
            raise ValueError("goal atoms must be distinct")
        object.__setattr__(self, "initial", frozenset(self.initial))


Library = Mapping[str, BehaviorSpec]


def as_library(behaviors: Sequence[BehaviorSpec] | Library) -> dict[str, BehaviorSpec]:
    if isinstance(behaviors, Mapping):
        return dict(behaviors)
    return {b.name: b for b in behaviors}


# --------------------------------------------------------------------------
# Unification


def _is_var(token: str) -> bool:
    return token.startswith("?")


def _match(pattern: ConditionAtom, atom: ConditionAtom) -> Optional[dict[str, str]]:
    if pattern.predicate != atom.predicate or len(pattern.args) != len(atom.args):
        return None
    if pattern.threshold != atom.threshold:
        return None
    env: dict[str, str] = {}
    for p, a in zip(pattern.args, atom.args):
        if _is_var(p):
            if env.setdefault(p, a) != a:
                return None
        elif p != a:
            return None
    return env


def _ground_token(token: str, env: Mapping[str, str], where: str) -> str:
    if not _is_var(token):
        return token
    if token not in env:
        raise PlanningError(f"{where}: variable {token} is not bound by the matched postcondition")
    return env[token]


def _ground(atom: ConditionAtom, env: Mapping[str, str], where: str) -> ConditionAtom:
    return replace(atom, args=tuple(_ground_token(a, env, where) for a in atom.args))


# --------------------------------------------------------------------------
# Backchaining


def _achievers(atom: ConditionAtom, library: Library):
    for spec in library.values():
        for post in spec.post:
            env = _match(post, atom)
            if env is not None:
                yield spec, env
                break


def plan(goal: GoalSpec, library: Sequence[BehaviorSpec] | Library, max_depth: int = 20) -> BTNode:
    """Backchain from ``goal`` and return the trimmed (unexpanded) tree.

    When several behaviors achieve an atom, the one with the fewest unmet
    preconditions wins; ties go to library order.
    """
    lib = as_library(library)
    known = goal.initial

    def achieve(atom: ConditionAtom, depth: int, stack: tuple[ConditionAtom, ...]) -> BTNode:
        if depth > max_depth:
            raise PlanningError(f"depth bound {max_depth} exceeded while planning for {atom}")
        if atom in stack:
            raise PlanningError(f"cyclic dependency on {atom}")
        options = []
        for order, (spec, env) in enumerate(_achievers(atom, lib)):
            where = f"behavior {spec.name}"
            pre = tuple(_ground(p, env, where) for p in spec.pre)
            unmet = sum(p not in known for p in pre)
            options.append((unmet, order, spec, env, pre))
        if not options:
            raise PlanningError(f"no behavior achieves {atom}")
        _, _, spec, env, pre = min(options, key=lambda o: (o[0], o[1]))
        where = f"behavior {spec.name}"
        children = [guard(p, depth + 1, stack + (atom,)) for p in pre]
        post = tuple(_ground(p, env, where) for p in spec.post)
        target = _ground_token(spec.target_template, env, where)
        params = tuple(d.name for d in spec.params)
        children.append(Action(spec.name, target, params, post))
        return Seq(*children)

    def guard(atom: ConditionAtom, depth: int, stack: tuple[ConditionAtom, ...]) -> BTNode:
        if atom in known:
            return Condition(atom)
        return Fallback(Condition(atom), achieve(atom, depth, stack))

    root = Seq(*(guard(a, 0, ()) for a in goal.goal))
    return renumber(trim(root))


# --------------------------------------------------------------------------
# Trimming


def _trim_once(node: BTNode) -> BTNode:
    if not node.is_control:
        return node
    kids = [_trim_once(c) for c in node.children]
    if node.kind == FALLBACK:
        # rule (b): a condition directly before the action it is the sole
        # postcondition of is redundant, the action checks it itself
        kept = []
        for i, k in enumerate(kids):
            nxt = kids[i + 1] if i + 1 < len(kids) else None
            if (
                k.kind == CONDITION
                and nxt is not None
                and nxt.kind == ACTION
                and nxt.post == (k.condition,)
            ):
                continue
            kept.append(k)
        kids = kept
    if len(kids) == 1:  # rule (a)
        return kids[0]
    return replace(node, children=tuple(kids))


def trim(tree: BTNode) -> BTNode:
    """Apply both trimming rules until nothing changes."""
    current = tree
    while True:
        nxt = _trim_once(current)
        if nxt == current:
            return renumber(current)
        current = nxt


# --------------------------------------------------------------------------
# Composite expansion and slot naming


def expand_composites(tree: BTNode, library: Sequence[BehaviorSpec] | Library, max_depth: int = 20) -> BTNode:
    """Replace composite/alias actions with primitive ones, then trim.

    A composite's postconditions move to its last part; an alias keeps the
    alias's postconditions. Parameters become placeholder slots; call
    :func:`name_slots` to give them their final names.
    """
    lib = as_library(library)

    def expand(node: BTNode, depth: int) -> BTNode:
        if node.is_control:
            return replace(node, children=tuple(expand(c, depth) for c in node.children))
        if node.kind != ACTION:
            return node
        spec = lib.get(node.behavior)
        if spec is None:
            raise PlanningError(f"unknown behavior {node.behavior!r}")
        if spec.is_primitive:
            return node
        if depth >= max_depth:
            raise PlanningError(f"cyclic expansion through {spec.name}")
        env = _bindings(spec, node)
        parts = []
        for i, (name, tgt) in enumerate(spec.expand):
            part = lib.get(name)
            if part is None:
                raise PlanningError(f"{spec.name} expands to unknown behavior {name!r}")
            last = i == len(spec.expand) - 1
            post = node.post if last else ()
            target = _ground_token(tgt, env, f"expansion of {spec.name}")
            params = tuple(d.name for d in part.params)
            parts.append(expand(Action(name, target, params, post), depth + 1))
        return parts[0] if len(parts) == 1 else Seq(*parts)

    return renumber(trim(expand(tree, 0)))


def _bindings(spec: BehaviorSpec, node: BTNode) -> dict[str, str]:
    """Recover variable bindings of a planned action from its grounded post."""
    env: dict[str, str] = {}
    for pattern, atom in zip(spec.post, node.post):
        m = _match(pattern, atom)
        if m:
            env.update(m)
    if _is_var(spec.target_template) and node.target is not None:
        env.setdefault(spec.target_template, node.target)
    return env


def name_slots(tree: BTNode, library: Sequence[BehaviorSpec] | Library) -> BTNode:
    """Give each unbound parameter the slot name ``{behavior}{k}_{param}``,
    where ``k`` counts that behavior's actions in depth-first order."""
    lib = as_library(library)
    counters: dict[str, int] = defaultdict(int)

    def walk(node: BTNode) -> BTNode:
        if node.is_control:
            return replace(node, children=tuple(walk(c) for c in node.children))
        if node.kind != ACTION:
            return node
        spec = lib[node.behavior]
        k = counters[node.behavior]
        counters[node.behavior] += 1
        params = tuple(
            f"{node.behavior}{k}_{d.name}" if isinstance(p, str) else p
            for p, d in zip(node.params, spec.params)
        )
        return replace(node, params=params)

    return walk(tree)


def build_tree(goal: GoalSpec, library: Sequence[BehaviorSpec] | Library) -> BTNode:
    """plan → expand → name slots: the executable tree for a task."""
    lib = as_library(library)
    tree = name_slots(expand_composites(plan(goal, lib), lib), lib)
    validate_tree(tree)
    return tree


def free_parameters(tree: BTNode, library: Sequence[BehaviorSpec] | Library) -> ParamSpace:
    return _free_parameters(tree, as_library(library))


def simulate_abstract(tree: BTNode, initial: frozenset[ConditionAtom], max_ticks: int = 100) -> set[ConditionAtom]:
    """Tick ``tree`` against a symbolic state where every action makes its
    postconditions true. Returns the final state."""
    state = set(initial)
    # parameter values are irrelevant symbolically, but slots must be bound
    params = {slot: 0.0 for n in iter_nodes(tree) for slot in n.free_slots}

    def run(node: BTNode) -> NodeStatus:
        state.update(node.post)
        return NodeStatus.SUCCESS

    for _ in range(max_ticks):
        ctx = TickContext(None, params, check=lambda a: a in state, run_action=run)
        status = tick(tree, ctx)
        if status is not NodeStatus.RUNNING:
            break
    return state
