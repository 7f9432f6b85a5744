from dataclasses import replace

import pytest

from bebop.bt import parse, to_text
from bebop.config import ExperimentConfig, experiments_from_dict, load_suite
from bebop.planner import build_tree
from bebop.experiment import cascade_stages, run_bebop, run_cascaded, run_experiment, run_repetition

SMALL = dict(repetitions=2, n_candidates=200, n_trees=10, batch_size=10, n_initial=5, budget_steps=3000)


def test_seeds_are_disjoint_and_reproducible():
    c = ExperimentConfig(task="lift")
    train, val = c.seeds(0)
    assert len(train) == len(val) == 20
    assert not set(train) & set(val)
    assert c.seeds(0) == ExperimentConfig(task="lift").seeds(0)
    assert c.seeds(1) != c.seeds(0)
    assert replace(c, master_seed=1).seeds(0) != c.seeds(0)


def test_config_validation_and_expansion():
    with pytest.raises(ValueError):
        ExperimentConfig(task="lift", mode="magic")
    with pytest.raises(ValueError):
        ExperimentConfig(task="lift", budget_steps=-1)
    cfgs = experiments_from_dict({"tasks": ["lift", "door"], "modes": ["bebop", "cascaded"], "repetitions": 2})
    assert [c.label for c in cfgs] == ["lift-bebop", "lift-cascaded", "door-bebop", "door-cascaded"]
    with pytest.raises(ValueError):
        experiments_from_dict({"task": "lift", "budget": 3})


def test_cascade_stages_for_door():
    entry = load_suite().task("door")
    tree = build_tree(entry.goal, entry.library)
    stages = [to_text(s) for s in cascade_stages(tree)]
    assert stages[0].startswith("(act grasp handle")
    assert stages[1].startswith("(sequence (act grasp")
    assert stages[-1] == to_text(tree)
    assert len(stages) == 3


def test_cascade_stages_without_free_actions():
    tree = parse("(sequence (cond a) (act open world))")
    assert cascade_stages(tree) == [tree]


def test_zero_budget_records_only_the_plan():
    rec = run_repetition(ExperimentConfig(task="lift", budget_steps=0), 0)
    assert rec.planned_tree.startswith("(fallback (cond at cube lifted)")
    assert rec.curve == [] and rec.total_steps == 0 and rec.evaluations == 0


def test_small_run_is_deterministic_and_consistent():
    cfg = ExperimentConfig(task="lift", **SMALL)
    a, b = run_repetition(cfg, 0), run_repetition(cfg, 0)
    assert a == b
    assert a.total_steps >= cfg.budget_steps or a.solved or a.stages[-1].iterations > 0
    assert [p.steps for p in a.curve] == sorted(p.steps for p in a.curve)
    assert a.improvements == a.validations == len(a.curve)
    assert a.total_steps == sum(s.steps for s in a.stages)


def test_cascaded_run_walks_stages_in_order():
    cfg = ExperimentConfig(task="door", mode="cascaded", **SMALL)
    rec = run_cascaded(cfg)
    assert rec.mode == "cascaded"
    assert [s.stage for s in rec.stages] == list(range(len(rec.stages)))
    assert rec.stages[0].dimensions == ["grasp0_x", "grasp0_y", "grasp0_z", "grasp0_yaw"]
    stages = [p.stage for p in rec.curve]
    assert stages == sorted(stages)
    with pytest.raises(ValueError):
        run_bebop(cfg)


def test_workers_do_not_change_results():
    cfg = ExperimentConfig(task="lift", **dict(SMALL, budget_steps=1500))
    assert run_experiment(cfg, workers=1) == run_experiment(cfg, workers=2)


def test_baseline_modes_run():
    for mode in ("random-search-baseline", "rf-classic-baseline"):
        rec = run_repetition(ExperimentConfig(task="lift", mode=mode, **dict(SMALL, budget_steps=1000)), 0)
        assert rec.evaluations > 0
