"""Shared test utilities: random trees and an exhaustive equivalence check."""

import itertools

import numpy as np

from bebop.bt import ACTION, Action, BTNode, Condition, ConditionAtom, NodeStatus, TickContext, iter_nodes, renumber, tick

ATOMS = tuple(ConditionAtom(f"c{i}") for i in range(3))
STATUSES = (NodeStatus.SUCCESS, NodeStatus.FAILURE, NodeStatus.RUNNING)


def random_tree(rng: np.random.Generator, max_leaves: int = 6) -> BTNode:
    """A random tree with at most ``max_leaves`` leaves and unique action names.

    Guarded actions (a fallback over a condition and the action achieving
    it) and single-child control nodes are over-represented so both
    trimming rules get exercised.
    """
    names = itertools.count()
    budget = [int(rng.integers(1, max_leaves + 1))]

    def leaf():
        budget[0] -= 1
        if rng.random() < 0.4:
            return Condition(ATOMS[rng.integers(len(ATOMS))])
        post = () if rng.random() < 0.3 else (ATOMS[rng.integers(len(ATOMS))],)
        return Action(f"a{next(names)}", "obj", (), post)

    def node(depth):
        if budget[0] <= 1 or depth >= 4 or rng.random() < 0.3:
            return leaf()
        if budget[0] >= 2 and rng.random() < 0.25:
            atom = ATOMS[rng.integers(len(ATOMS))]
            budget[0] -= 2
            return BTNode("fallback", (Condition(atom), Action(f"a{next(names)}", "obj", (), (atom,))))
        kind = "sequence" if rng.random() < 0.5 else "fallback"
        n = int(rng.integers(1, 4))
        kids = []
        for _ in range(n):
            if budget[0] <= 0:
                break
            kids.append(node(depth + 1))
        return BTNode(kind, tuple(kids))

    return renumber(node(0))


def action_names(tree: BTNode) -> list[str]:
    return [n.behavior for n in iter_nodes(tree) if n.kind == ACTION]


def equivalent(a: BTNode, b: BTNode) -> bool:
    """Same root status for every atom truth assignment and every
    combination of action outcomes (actions check their postconditions
    before running)."""
    names = sorted(set(action_names(a)) | set(action_names(b)))
    for truth in itertools.product((False, True), repeat=len(ATOMS)):
        true_atoms = {atom for atom, t in zip(ATOMS, truth) if t}
        for outcome in itertools.product(STATUSES, repeat=len(names)):
            status = dict(zip(names, outcome))
            results = []
            for tree in (a, b):
                ctx = TickContext(None, {}, check=true_atoms.__contains__, run_action=lambda n: status[n.behavior])
                results.append(tick(tree, ctx))
            if results[0] is not results[1]:
                return False
    return True


def single_child_controls(tree: BTNode) -> int:
    return sum(1 for n in iter_nodes(tree) if n.is_control and len(n.children) == 1)
