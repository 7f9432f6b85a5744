import pytest
from hypothesis import given, settings, strategies as st

from bebop.bt import (
    Action,
    BTNode,
    Condition,
    ConditionAtom,
    ConfigurationError,
    Fallback,
    NodeStatus,
    Seq,
    TickContext,
    count_action_nodes,
    extract_subtree,
    iter_nodes,
    parse,
    renumber,
    tick,
    to_pretty,
    to_text,
)
from bebop.config import load_suite
from bebop.planner import build_tree, free_parameters

DOOR = (
    "(fallback (cond angle> door 0.3) (sequence "
    "(act grasp handle ?grasp0_x ?grasp0_y ?grasp0_z ?grasp0_yaw (post grasped handle)) "
    "(act reach handle ?reach0_x ?reach0_y ?reach0_z (post angle> door 0.3))))"
)
GRASP = "(act grasp handle ?grasp0_x ?grasp0_y ?grasp0_z ?grasp0_yaw (post grasped handle))"

TRUE = ConditionAtom("t")
FALSE = ConditionAtom("f")


def ctx_for(true_atoms=(), params=None, **kw):
    truth = set(true_atoms)
    return TickContext(None, params or {}, check=lambda a: a in truth, **kw)


def act(name, post=(), params=()):
    return Action(name, "obj", params, post)


def test_fallback_short_circuits():
    tree = renumber(Fallback(Condition(TRUE), act("x")))
    ctx = ctx_for({TRUE})
    assert tick(tree, ctx) is NodeStatus.SUCCESS
    assert ctx.emitted is None


def test_sequence_skips_action_whose_post_holds():
    done = ConditionAtom("done")
    tree = renumber(Seq(Condition(TRUE), act("x", post=(done,))))
    ctx = ctx_for({TRUE, done})
    assert tick(tree, ctx) is NodeStatus.SUCCESS
    assert ctx.emitted is None


def test_single_grasp_runs_and_emits_one_primitive():
    tree = parse(GRASP)
    params = {"grasp0_x": 0.01, "grasp0_y": 0.0, "grasp0_z": -0.02, "grasp0_yaw": 0.1}
    ctx = ctx_for(params=params)
    assert tick(tree, ctx) is NodeStatus.RUNNING
    node, values = ctx.emitted
    assert node.behavior == "grasp" and node.target == "handle"
    assert values == (0.01, 0.0, -0.02, 0.1)


def test_action_after_emitting_fails_if_post_unmet_else_succeeds():
    post = ConditionAtom("p")
    with_post = renumber(act("x", post=(post,)))
    executed = set()
    assert tick(with_post, ctx_for(executed=executed)) is NodeStatus.RUNNING
    assert tick(with_post, ctx_for(executed=executed)) is NodeStatus.FAILURE
    assert tick(with_post, ctx_for({post}, executed=executed)) is NodeStatus.SUCCESS
    bare = renumber(act("y"))
    executed = set()
    tick(bare, ctx_for(executed=executed))
    assert tick(bare, ctx_for(executed=executed)) is NodeStatus.SUCCESS


def test_sequence_and_fallback_status_tables():
    def leaf(status):
        return {NodeStatus.SUCCESS: Condition(TRUE), NodeStatus.FAILURE: Condition(FALSE)}[status]

    S, F = NodeStatus.SUCCESS, NodeStatus.FAILURE
    for a in (S, F):
        for b in (S, F):
            seq = renumber(Seq(leaf(a), leaf(b)))
            fb = renumber(Fallback(leaf(a), leaf(b)))
            assert tick(seq, ctx_for({TRUE})) is (S if a is S and b is S else F)
            assert tick(fb, ctx_for({TRUE})) is (S if a is S or b is S else F)


def test_running_child_stops_the_scan():
    tree = renumber(Seq(act("first"), act("second")))
    ctx = ctx_for()
    assert tick(tree, ctx) is NodeStatus.RUNNING
    assert ctx.emitted[0].behavior == "first"


def test_reactivity_preempts_running_action():
    # once the guard flips to true the running action is not ticked again
    guard = ConditionAtom("g")
    tree = renumber(Fallback(Condition(guard), act("x", post=(ConditionAtom("p"),))))
    executed = set()
    c1 = ctx_for(executed=executed)
    assert tick(tree, c1) is NodeStatus.RUNNING
    c2 = ctx_for({guard}, executed=executed, run_action=lambda n: pytest.fail("action ticked"))
    assert tick(tree, c2) is NodeStatus.SUCCESS


def test_determinism_of_tick():
    tree = parse(DOOR)
    params = {n: 0.01 for n in ("grasp0_x", "grasp0_y", "grasp0_z", "grasp0_yaw", "reach0_x", "reach0_y", "reach0_z")}
    outs = []
    for _ in range(2):
        ctx = ctx_for(params=params)
        outs.append((tick(tree, ctx), ctx.emitted))
    assert outs[0] == outs[1]


def test_unbound_slot_and_unknown_behavior_are_configuration_errors():
    tree = parse(GRASP)
    with pytest.raises(ConfigurationError):
        tick(tree, ctx_for(params={"grasp0_x": 0.0}))
    full = {"grasp0_x": 0, "grasp0_y": 0, "grasp0_z": 0, "grasp0_yaw": 0}
    with pytest.raises(ConfigurationError):
        tick(tree, ctx_for(params=full, behaviors={"reach"}))


def test_count_action_nodes():
    assert count_action_nodes(Condition(TRUE)) == 0
    assert count_action_nodes(parse(DOOR)) == 2
    a = act("a")
    assert count_action_nodes(Seq(a, Fallback(Condition(TRUE), a), a)) == 3


def test_extract_subtree_door():
    tree = parse(DOOR)
    assert to_text(extract_subtree(tree, 1)) == GRASP
    assert to_text(extract_subtree(tree, 2)) == DOOR[len("(fallback (cond angle> door 0.3) ") : -1]


def test_extract_subtree_skips_parameterless_actions():
    tree = renumber(Seq(act("a", params=("p",)), act("open"), act("b", params=("q",)), act("c")))
    assert count_action_nodes(tree, free_only=True) == 2
    one = extract_subtree(tree, 1)
    assert [n.behavior for n in iter_nodes(one) if n.kind == "act"] == ["a", "open"]
    two = extract_subtree(tree, 2)
    assert to_text(two) == to_text(tree)


def test_extract_subtree_range():
    tree = parse(DOOR)
    for n in (0, 3):
        with pytest.raises(ValueError):
            extract_subtree(tree, n)


@pytest.mark.parametrize("task", ["lift", "door", "pickplace", "stack", "peginsert"])
def test_extract_subtree_is_monotone(task):
    suite = load_suite()
    entry = suite.task(task)
    tree = build_tree(entry.goal, entry.library)
    n_free = count_action_nodes(tree, free_only=True)
    prev = set()
    for n in range(1, n_free + 1):
        sub = extract_subtree(tree, n)
        ids = {node.node_id for node in iter_nodes(sub) if not node.is_control}
        assert prev <= ids
        assert count_action_nodes(sub, free_only=True) == n
        prev = ids


def test_free_parameters_dimensions():
    suite = load_suite()
    lib = suite.task("door").library
    assert len(free_parameters(parse(GRASP), lib).dims) == 4
    sub = extract_subtree(parse(DOOR), 2)
    space = free_parameters(sub, lib)
    assert space.names == ["grasp0_x", "grasp0_y", "grasp0_z", "grasp0_yaw", "reach0_x", "reach0_y", "reach0_z"]
    assert len(free_parameters(renumber(Seq(Action("open", "world"), Action("open", "world"))), lib).dims) == 0
    grasp = lib["grasp"].params[0]
    assert (space.dims[0].lower, space.dims[0].upper) == (grasp.lower, grasp.upper)


def test_round_trip_is_byte_identical():
    assert to_text(parse(DOOR)) == DOOR
    assert to_text(parse(to_pretty(parse(DOOR)))) == DOOR


@pytest.mark.parametrize("bad", ["(sequence", "(act grasp)", "(fallback)", "(foo x)", "(cond a) (cond b)", "(act g h x)"])
def test_parse_rejects_bad_text(bad):
    with pytest.raises(ValueError):
        parse(bad)


atoms = st.builds(
    ConditionAtom,
    st.sampled_from(["at", "grasped", "angle>"]),
    st.tuples(st.sampled_from(["cube", "door", "bin"])),
    st.one_of(st.none(), st.floats(-10, 10, allow_nan=False, allow_infinity=False)),
)


def trees(max_leaves=8):
    leaf = st.one_of(
        atoms.map(Condition),
        st.builds(
            Action,
            st.sampled_from(["grasp", "reach", "open"]),
            st.sampled_from(["cube", "world"]),
            st.lists(st.one_of(st.sampled_from(["x", "y"]), st.floats(-1, 1, allow_nan=False)), max_size=3),
            st.lists(atoms, max_size=2),
        ),
    )
    return st.recursive(
        leaf,
        lambda kids: st.builds(
            lambda k, xs: BTNode(k, tuple(xs)),
            st.sampled_from(["sequence", "fallback"]),
            st.lists(kids, min_size=1, max_size=3),
        ),
        max_leaves=max_leaves,
    )


@settings(max_examples=200, deadline=None)
@given(trees())
def test_text_round_trip_property(tree):
    text = to_text(tree)
    assert to_text(parse(text)) == text
