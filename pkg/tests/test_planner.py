import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bebop.bt import Action, Condition, ConditionAtom, Fallback, Seq, iter_nodes, parse, renumber, to_text
from bebop.config import load_suite
from bebop.planner import (
    BehaviorSpec,
    GoalSpec,
    PlanningError,
    build_tree,
    expand_composites,
    plan,
    simulate_abstract,
    trim,
)
from bebop.space import Dimension

from helpers import equivalent, random_tree, single_child_controls

DOOR_FULL = (
    "(fallback (cond angle> door 0.3) (sequence "
    "(act grasp handle ?grasp0_x ?grasp0_y ?grasp0_z ?grasp0_yaw (post grasped handle)) "
    "(act reach handle ?reach0_x ?reach0_y ?reach0_z (post angle> door 0.3))))"
)

grasped = lambda o: ConditionAtom("grasped", (o,))
at = lambda o, r: ConditionAtom("at", (o, r))
XYZ = (Dimension("x", "real", -1, 1), Dimension("y", "real", -1, 1), Dimension("z", "real", -1, 1))

LIB = [
    BehaviorSpec("reach", ("?o",), params=XYZ),
    BehaviorSpec("grasp", ("?o",), post=(grasped("?o"),), params=XYZ + (Dimension("yaw", "real", -1, 1),)),
    BehaviorSpec("open", target="world"),
    BehaviorSpec("lift", ("?o",), pre=(grasped("?o"),), post=(at("?o", "lifted"),), expand=(("reach", "?o"),)),
    BehaviorSpec("place", ("?o", "?r"), pre=(grasped("?o"),), post=(at("?o", "?r"),), expand=(("reach", "?r"), ("open", "world"))),
]


def test_goal_already_true_is_a_single_condition():
    tree = plan(GoalSpec((at("cube", "lifted"),), {at("cube", "lifted")}), LIB)
    assert to_text(tree) == "(cond at cube lifted)"


def test_door_full_tree():
    suite = load_suite()
    entry = suite.task("door")
    assert to_text(build_tree(entry.goal, entry.library)) == DOOR_FULL


def test_cube_lift_structure():
    tree = plan(GoalSpec((at("cube", "lifted"),)), LIB)
    assert to_text(tree) == (
        "(fallback (cond at cube lifted) (sequence "
        "(act grasp cube ?x ?y ?z ?yaw (post grasped cube)) "
        "(act lift cube (post at cube lifted))))"
    )


def test_fewest_unmet_preconditions_wins():
    goal = at("cube", "lifted")
    hard = BehaviorSpec("hard", ("?o",), pre=(ConditionAtom("ready"), grasped("?o")), post=(at("?o", "lifted"),))
    easy = BehaviorSpec("easy", ("?o",), pre=(grasped("?o"),), post=(at("?o", "lifted"),))
    lib = [LIB[1], hard, easy]
    tree = plan(GoalSpec((goal,), {ConditionAtom("ready")}), lib)
    # both have one unmet precondition once ``ready`` is known: library order
    assert "act hard" in to_text(tree)
    tree = plan(GoalSpec((goal,)), lib)
    assert "act easy" in to_text(tree)


def test_unreachable_atom_is_named():
    with pytest.raises(PlanningError, match="flying cube"):
        plan(GoalSpec((ConditionAtom("flying", ("cube",)),)), LIB)


def test_cyclic_dependency_detected():
    a, b = ConditionAtom("a"), ConditionAtom("b")
    lib = [BehaviorSpec("p", pre=(b,), post=(a,)), BehaviorSpec("q", pre=(a,), post=(b,))]
    with pytest.raises(PlanningError):
        plan(GoalSpec((a,)), lib)


def test_goal_atoms_distinct():
    with pytest.raises(ValueError):
        GoalSpec((grasped("cube"), grasped("cube")))


def test_composites_cannot_own_parameters():
    with pytest.raises(ValueError):
        BehaviorSpec("bad", params=XYZ, post=(grasped("?o"),), expand=(("reach", "?o"),))


@pytest.mark.parametrize("task", ["lift", "door", "pickplace", "stack", "peginsert"])
def test_plans_are_sound_and_trimmed(task):
    entry = load_suite().task(task)
    tree = build_tree(entry.goal, entry.library)
    assert single_child_controls(tree) == 0
    assert set(entry.goal.goal) <= simulate_abstract(tree, entry.goal.initial)
    assert trim(tree) == tree


def test_trim_rule_a_twice():
    a = Action("x", "obj")
    assert to_text(trim(Seq(Seq(a)))) == to_text(a)


def test_trim_rule_b_then_a():
    c = ConditionAtom("c")
    a = Action("x", "obj", (), (c,))
    tree = renumber(Fallback(Condition(c), a))
    out = trim(tree)
    assert to_text(out) == to_text(a)
    assert equivalent(tree, out)


def test_trim_keeps_condition_guarding_other_postconditions():
    c, d = ConditionAtom("c"), ConditionAtom("d")
    tree = renumber(Fallback(Condition(c), Action("x", "obj", (), (c, d))))
    assert trim(tree) == tree


def test_trim_idempotent_on_door():
    tree = parse(DOOR_FULL)
    assert to_text(trim(tree)) == DOOR_FULL


def test_expand_without_composites_is_unchanged():
    tree = parse("(sequence (act grasp cube ?x ?y ?z ?yaw (post grasped cube)) (act open world))")
    assert to_text(expand_composites(tree, LIB)) == to_text(tree)


def test_place_expands_to_reach_then_open():
    tree = renumber(Action("place", "cube", (), (at("cube", "bin"),)))
    assert to_text(expand_composites(tree, LIB)) == "(sequence (act reach bin ?x ?y ?z) (act open world (post at cube bin)))"


def test_alias_becomes_parameterized_reach():
    tree = renumber(Action("lift", "cube", (), (at("cube", "lifted"),)))
    assert to_text(expand_composites(tree, LIB)) == "(act reach cube ?x ?y ?z (post at cube lifted))"


def test_cyclic_expansion_detected():
    lib = [BehaviorSpec("p", post=(ConditionAtom("a"),), expand=(("q", "world"),)), BehaviorSpec("q", post=(ConditionAtom("a"),), expand=(("p", "world"),))]
    with pytest.raises(PlanningError):
        expand_composites(renumber(Action("p", "world")), lib)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trim_properties(seed):
    tree = random_tree(np.random.default_rng(seed))
    out = trim(tree)
    assert trim(out) == out
    assert single_child_controls(out) == 0
    assert len(list(iter_nodes(out))) <= len(list(iter_nodes(tree)))
    assert equivalent(tree, out)
