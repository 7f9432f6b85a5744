"""Behavior-tree data model, tick engine and subtree extraction.

Trees are immutable ``BTNode`` values. Control nodes are memoryless: every
root tick re-evaluates children from the left, so a running action is
preempted as soon as an earlier branch changes status.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Collection, Iterator, Mapping, Optional, Sequence, Union

from .space import ParamSpace


class ConfigurationError(ValueError):
    """A tree references a behavior, condition or parameter that is not defined."""


class NodeStatus(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    RUNNING = "running"


SEQUENCE = "sequence"
FALLBACK = "fallback"
ACTION = "act"
CONDITION = "cond"
CONTROL_KINDS = (SEQUENCE, FALLBACK)


@dataclass(frozen=True)
class ConditionAtom:
    """A grounded condition such as ``angle> door 0.3`` or ``grasped cube``.

    Equality is syntactic on (predicate, args, threshold).
    """

    predicate: str
    args: tuple[str, ...] = ()
    threshold: Optional[float] = None

    def tokens(self) -> list[str]:
        out = [self.predicate, *self.args]
        if self.threshold is not None:
            out.append(_format_number(self.threshold))
        return out

    def __str__(self) -> str:
        return " ".join(self.tokens())

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "ConditionAtom":
        if not tokens:
            raise ValueError("empty condition atom")
        predicate, *rest = tokens
        threshold = None
        if rest and _is_number(rest[-1]):
            threshold = float(rest.pop())
        return cls(predicate, tuple(rest), threshold)


# A parameter is either a free slot (its name) or a bound numeric value.
ParamValue = Union[str, float]


@dataclass(frozen=True)
class BTNode:
    kind: str
    children: tuple["BTNode", ...] = ()
    node_id: int = 0
    behavior: Optional[str] = None
    target: Optional[str] = None
    params: tuple[ParamValue, ...] = ()
    post: tuple[ConditionAtom, ...] = ()
    condition: Optional[ConditionAtom] = None

    @property
    def is_control(self) -> bool:
        return self.kind in CONTROL_KINDS

    @property
    def free_slots(self) -> tuple[str, ...]:
        return tuple(p for p in self.params if isinstance(p, str))

    def __str__(self) -> str:
        return to_text(self)


def Seq(*children: BTNode) -> BTNode:
    return BTNode(SEQUENCE, tuple(children))


def Fallback(*children: BTNode) -> BTNode:
    return BTNode(FALLBACK, tuple(children))


def Action(
    behavior: str,
    target: str,
    params: Sequence[ParamValue] = (),
    post: Sequence[ConditionAtom] = (),
) -> BTNode:
    return BTNode(ACTION, behavior=behavior, target=target, params=tuple(params), post=tuple(post))


def Condition(atom: ConditionAtom) -> BTNode:
    return BTNode(CONDITION, condition=atom)


def iter_nodes(node: BTNode) -> Iterator[BTNode]:
    """Depth-first, left-to-right (pre-order) traversal."""
    yield node
    for child in node.children:
        yield from iter_nodes(child)


def iter_leaves(node: BTNode) -> Iterator[BTNode]:
    return (n for n in iter_nodes(node) if not n.is_control)


def renumber(node: BTNode, start: int = 0) -> BTNode:
    """Assign pre-order node ids starting at ``start``."""
    counter = iter(range(start, 1 << 62))

    def _walk(n: BTNode) -> BTNode:
        nid = next(counter)
        return replace(n, node_id=nid, children=tuple(_walk(c) for c in n.children))

    return _walk(node)


def validate_tree(node: BTNode) -> None:
    ids = set()
    for n in iter_nodes(node):
        if n.node_id in ids:
            raise ConfigurationError(f"duplicate node id {n.node_id}")
        ids.add(n.node_id)
        if n.is_control and not n.children:
            raise ConfigurationError(f"{n.kind} node {n.node_id} has no children")
        if not n.is_control and n.children:
            raise ConfigurationError(f"leaf node {n.node_id} has children")
        if n.kind not in (*CONTROL_KINDS, ACTION, CONDITION):
            raise ConfigurationError(f"unknown node kind {n.kind!r}")


# --------------------------------------------------------------------------
# Ticking


@dataclass
class TickContext:
    """Per-tick inputs and the single-slot action sink.

    ``check`` evaluates a condition atom against ``observation``.
    ``behaviors`` is the set of behavior ids the executor understands.
    ``run_action`` overrides what an action does once its postcondition check
    fails; the default emits one primitive and returns Running, then Failure
    (or Success if the action has no postcondition) on later ticks.
    """

    observation: object
    params: Mapping[str, float]
    check: Callable[[ConditionAtom], bool]
    behaviors: Optional[Collection[str]] = None
    executed: set[int] = field(default_factory=set)
    emitted: Optional[tuple[BTNode, tuple[float, ...]]] = None
    run_action: Optional[Callable[[BTNode], NodeStatus]] = None

    def emit(self, node: BTNode, values: tuple[float, ...]) -> None:
        if self.emitted is not None:
            raise RuntimeError("more than one primitive emitted in a single tick")
        self.emitted = (node, values)


def bind_params(node: BTNode, params: Mapping[str, float]) -> tuple[float, ...]:
    values = []
    for p in node.params:
        if isinstance(p, str):
            if p not in params:
                raise ConfigurationError(f"unbound parameter slot ?{p} on node {node.node_id}")
            values.append(float(params[p]))
        else:
            values.append(float(p))
    return tuple(values)


def tick(node: BTNode, ctx: TickContext) -> NodeStatus:
    kind = node.kind
    if kind == SEQUENCE:
        for child in node.children:
            status = tick(child, ctx)
            if status is not NodeStatus.SUCCESS:
                return status
        return NodeStatus.SUCCESS
    if kind == FALLBACK:
        for child in node.children:
            status = tick(child, ctx)
            if status is not NodeStatus.FAILURE:
                return status
        return NodeStatus.FAILURE
    if kind == CONDITION:
        return NodeStatus.SUCCESS if ctx.check(node.condition) else NodeStatus.FAILURE
    if kind == ACTION:
        if ctx.behaviors is not None and node.behavior not in ctx.behaviors:
            raise ConfigurationError(f"unknown behavior {node.behavior!r}")
        values = bind_params(node, ctx.params)
        if node.post and all(ctx.check(atom) for atom in node.post):
            return NodeStatus.SUCCESS
        if ctx.run_action is not None:
            return ctx.run_action(node)
        if node.node_id in ctx.executed:
            return NodeStatus.FAILURE if node.post else NodeStatus.SUCCESS
        ctx.emit(node, values)
        ctx.executed.add(node.node_id)
        return NodeStatus.RUNNING
    raise ConfigurationError(f"unknown node kind {kind!r}")


# --------------------------------------------------------------------------
# Structure queries


def count_action_nodes(tree: BTNode, free_only: bool = False) -> int:
    return sum(
        1
        for n in iter_leaves(tree)
        if n.kind == ACTION and (not free_only or n.free_slots)
    )


def _collapse(node: BTNode) -> BTNode:
    if node.is_control and len(node.children) == 1:
        return _collapse(node.children[0])
    return node


def extract_subtree(tree: BTNode, n: int) -> BTNode:
    """Subtree for cascaded learning stage ``n``.

    Leaves are taken in depth-first order starting at the first action with
    free parameters and stopping before the (n+1)-th such action. Actions
    without free parameters do not advance the count. Control nodes keep
    their surviving children; single-child control nodes are collapsed.
    Node ids are preserved so stage trees nest.
    """
    leaves = list(iter_leaves(tree))
    free_idx = [i for i, leaf in enumerate(leaves) if leaf.kind == ACTION and leaf.free_slots]
    if not 1 <= n <= len(free_idx):
        raise ValueError(f"n must be in [1, {len(free_idx)}], got {n}")
    start = free_idx[0]
    stop = free_idx[n] if n < len(free_idx) else len(leaves)
    position = iter(range(len(leaves)))

    def _filter(node: BTNode) -> Optional[BTNode]:
        if not node.is_control:
            return node if start <= next(position) < stop else None
        kids = tuple(k for k in (_filter(c) for c in node.children) if k is not None)
        if not kids:
            return None
        return _collapse(replace(node, children=kids))

    out = _filter(tree)
    assert out is not None
    return out


def free_parameters(tree: BTNode, library: Mapping[str, object]) -> ParamSpace:
    """One dimension per free slot, in depth-first order.

    ``library`` maps behavior id to an object whose ``params`` lists the
    behavior's dimensions positionally; bounds are copied from there and the
    dimension is renamed after the slot.
    """
    dims = []
    seen: set[str] = set()
    for node in iter_leaves(tree):
        if node.kind != ACTION:
            continue
        spec = library.get(node.behavior)
        if spec is None:
            raise ConfigurationError(f"unknown behavior {node.behavior!r}")
        if len(spec.params) != len(node.params):
            raise ConfigurationError(
                f"{node.behavior} takes {len(spec.params)} parameters, node has {len(node.params)}"
            )
        for slot, dim in zip(node.params, spec.params):
            if isinstance(slot, str) and slot not in seen:
                seen.add(slot)
                dims.append(replace(dim, name=slot, prior=None))
    return ParamSpace(dims)


# --------------------------------------------------------------------------
# Text format
#
#   (fallback (cond angle> door 0.3)
#             (sequence (act grasp handle ?grasp0_x ... (post grasped handle)) ...))
#
# ``?name`` marks a free parameter slot. Canonical form is single-line with
# one space between tokens.

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|^[+-]?(inf|nan)$")


def _is_number(token: str) -> bool:
    return bool(_NUMBER.match(token))


def _format_number(x: float) -> str:
    return repr(float(x))


def _to_sexpr(node: BTNode) -> list:
    if node.is_control:
        return [node.kind, *(_to_sexpr(c) for c in node.children)]
    if node.kind == CONDITION:
        return [CONDITION, *node.condition.tokens()]
    out: list = [ACTION, node.behavior, node.target]
    out += [f"?{p}" if isinstance(p, str) else _format_number(p) for p in node.params]
    out += [["post", *atom.tokens()] for atom in node.post]
    return out


def _render(expr) -> str:
    if isinstance(expr, list):
        return "(" + " ".join(_render(e) for e in expr) + ")"
    return expr


def to_text(tree: BTNode) -> str:
    return _render(_to_sexpr(tree))


def to_pretty(tree: BTNode, indent: int = 2) -> str:
    """Multi-line rendering for humans; not the canonical form."""

    def _walk(node: BTNode, depth: int) -> list[str]:
        pad = " " * (indent * depth)
        if not node.is_control:
            return [pad + to_text(node)]
        lines = [f"{pad}({node.kind}"]
        for c in node.children:
            lines += _walk(c, depth + 1)
        lines[-1] += ")"
        return lines

    return "\n".join(_walk(tree, 0))


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _read(tokens: list[str], pos: int):
    if pos >= len(tokens):
        raise ValueError("unexpected end of tree text")
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ")":
            item, pos = _read(tokens, pos)
            items.append(item)
        if pos >= len(tokens):
            raise ValueError("unbalanced parentheses in tree text")
        return items, pos + 1
    if tok == ")":
        raise ValueError("unexpected ')' in tree text")
    return tok, pos + 1


def _from_sexpr(expr) -> BTNode:
    if not isinstance(expr, list) or not expr:
        raise ValueError(f"expected a node, got {expr!r}")
    head, *rest = expr
    if head in CONTROL_KINDS:
        return BTNode(head, tuple(_from_sexpr(e) for e in rest))
    if head == CONDITION:
        return Condition(ConditionAtom.from_tokens(rest))
    if head == ACTION:
        if len(rest) < 2 or any(isinstance(e, list) for e in rest[:2]):
            raise ValueError("act node needs a behavior and a target")
        behavior, target, *tail = rest
        params: list[ParamValue] = []
        post: list[ConditionAtom] = []
        for item in tail:
            if isinstance(item, list):
                if not item or item[0] != "post":
                    raise ValueError(f"unexpected group in act node: {item!r}")
                post.append(ConditionAtom.from_tokens(item[1:]))
            elif post:
                raise ValueError("parameters must precede post groups")
            elif item.startswith("?"):
                params.append(item[1:])
            elif _is_number(item):
                params.append(float(item))
            else:
                raise ValueError(f"bad parameter token {item!r}")
        return Action(behavior, target, params, post)
    raise ValueError(f"unknown node kind {head!r}")


def parse(text: str) -> BTNode:
    tokens = _tokenize(text)
    expr, pos = _read(tokens, 0)
    if pos != len(tokens):
        raise ValueError("trailing tokens after tree")
    tree = renumber(_from_sexpr(expr))
    validate_tree(tree)
    return tree
