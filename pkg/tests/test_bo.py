import csv
import math

import numpy as np
import pytest

from bebop.bo import BOConfig, OptState, acquisition, ask, run_batch, suggest_initial, suggest_next, write_trace
from bebop.space import Dimension, ParamSpace
from bebop.surrogate import ForestConfig, fit

LINE = ParamSpace([Dimension("x", "real", 0.0, 1.0)])


def told(space, points, f, config=BOConfig(), seed=0):
    st = OptState(space, config, seed=seed)
    for p in points:
        st.tell(p, f(p))
    return st


def test_initial_design_reproducible_and_in_bounds():
    a = suggest_initial(LINE, 5, seed=3)
    assert a == suggest_initial(LINE, 5, seed=3)
    assert all(LINE.contains(p) for p in a)
    with pytest.raises(ValueError):
        suggest_initial(LINE, 0, 0)


def test_initial_design_starts_at_prior_mode():
    space = ParamSpace([Dimension("x", "real", 0.0, 10.0), Dimension("c", "categorical", values=("a", "b"))])
    pts = suggest_initial(space.with_priors({"x": 3.0, "c": "b"}, 10.0), 50, seed=0)
    assert pts[0] == {"x": 3.0, "c": "b"}
    assert abs(np.mean([p["x"] for p in pts]) - 3.0) < 1.0


def test_constant_forest_picks_the_point_farthest_from_data():
    st = told(LINE, [{"x": 0.1}, {"x": 0.3}], lambda p: 1.0)
    forest = st.fit_surrogate()
    assert forest.lam > 0
    x = suggest_next(st, forest)["x"]
    grid = np.linspace(0, 1, 1001)
    best = grid[np.argmax(forest.d_min(grid[:, None]))]
    assert x == pytest.approx(best, abs=1e-3)


def test_beta_zero_exploits_the_mean_peak():
    pts = [{"x": v} for v in np.linspace(0, 1, 11)]
    f = lambda p: -((p["x"] - 0.6) ** 2)
    st = told(LINE, pts, f, BOConfig(beta=0.0))
    x = suggest_next(st, st.fit_surrogate())["x"]
    assert abs(x - 0.6) <= 0.05


def test_suggestion_never_repeats_history():
    st = told(LINE, [{"x": 0.5}], lambda p: 0.0, BOConfig(n_initial=1))
    for _ in range(5):
        p = ask(st)
        assert all(o.params != p for o in st.history)
        st.tell(p, 0.0)


def test_batch_length_and_improvement_flag():
    st = OptState(LINE, BOConfig(n_initial=5, n_candidates=200), seed=0)
    run_batch(st, lambda p: 2.0, batch_size=50)
    assert len(st.history) == 50
    assert st.last_batch_improved is True
    run_batch(st, lambda p: 2.0, batch_size=10)
    assert st.last_batch_improved is False


def test_best_is_monotone_and_matches_history():
    st = OptState(LINE, BOConfig(n_initial=5, n_candidates=300), seed=1)
    f = lambda p: -((p["x"] - 0.3) ** 2)
    bests = []
    for _ in range(3):
        run_batch(st, f, batch_size=10)
        bests.append(st.best_reward)
        assert st.best_reward == max(o.reward for o in st.history)
    assert bests == sorted(bests)


def test_determinism_under_seed():
    f = lambda p: math.sin(7 * p["x"]) + (p["c"] == "b")
    space = ParamSpace([Dimension("x", "real", 0, 1), Dimension("c", "categorical", values=("a", "b"))])
    runs = []
    for _ in range(2):
        st = OptState(space, BOConfig(n_initial=4, n_candidates=200), seed=7)
        run_batch(st, lambda p: float(f(p)), 12)
        runs.append([(o.params, o.reward) for o in st.history])
    assert runs[0] == runs[1]


def test_mixed_space_suggestions_are_valid():
    space = ParamSpace(
        [
            Dimension("x", "real", -2, 2),
            Dimension("n", "integer", 1, 5),
            Dimension("o", "ordinal", values=(1, 2, 4)),
            Dimension("c", "categorical", values=("a", "b", "c")),
        ]
    )
    st = OptState(space, BOConfig(n_initial=3, n_candidates=200), seed=0)
    run_batch(st, lambda p: p["x"] + p["n"] + p["o"] + (p["c"] == "c"), 10)
    assert all(space.contains(o.params) for o in st.history)


def test_evaluator_error_keeps_partial_history():
    calls = []

    def bad(p):
        calls.append(p)
        if len(calls) == 3:
            raise RuntimeError("boom")
        return 0.0

    st = OptState(LINE, BOConfig(n_initial=5), seed=0)
    with pytest.raises(RuntimeError):
        run_batch(st, bad, 10)
    assert len(st.history) == 2


def test_random_strategy_and_unknown_settings():
    st = OptState(LINE, BOConfig(strategy="random"), seed=0)
    run_batch(st, lambda p: p["x"], 5)
    assert len(st.history) == 5
    with pytest.raises(ValueError):
        ask(OptState(LINE, BOConfig(strategy="grid")))
    forest = fit(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        acquisition(forest, np.array([[0.5]]), BOConfig(acquisition="pi"), 0.0)


def test_expected_improvement_is_nonnegative():
    forest = fit(np.array([[0.0], [0.4], [1.0]]), np.array([0.0, 1.0, 0.5]), ForestConfig(lam=1.0))
    U = np.linspace(0, 1, 50)[:, None]
    ei = acquisition(forest, U, BOConfig(acquisition="ei"), 1.0)
    assert np.all(ei >= 0)


def test_trace_csv(tmp_path):
    st = told(LINE, [{"x": 0.1}, {"x": 0.2}, {"x": 0.3}], lambda p: [3.0, 1.0, 5.0][int(p["x"] * 10) - 1])
    write_trace(st, tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert [float(r["best_so_far"]) for r in rows] == [3.0, 3.0, 5.0]


def test_prior_weighting_pulls_exploration_towards_the_mode():
    # constant data at 0.1 and 0.9: lambda = 0.5, UCB - min(y) = 0.5 * d(x);
    # the prior N(0.2, 0.05) raised to 10/2 gives (x - 0.1) exp(-1000 (x - 0.2)^2)
    # on [0.1, 0.5], maximised where 2000 t^2 + 200 t - 1 = 0 with t = x - 0.2
    space = LINE.with_priors({"x": 0.2}, 10.0)
    st = told(space, [{"x": 0.1}, {"x": 0.9}], lambda p: 0.0, BOConfig(prior_weight=10.0))
    t = (-200 + math.sqrt(200**2 + 4 * 2000)) / 4000
    assert suggest_next(st, st.fit_surrogate())["x"] == pytest.approx(0.2 + t, abs=1e-3)
    off = told(space, [{"x": 0.1}, {"x": 0.9}], lambda p: 0.0, BOConfig(prior_weight=0.0))
    assert suggest_next(off, off.fit_surrogate())["x"] == pytest.approx(0.5, abs=1e-3)
