import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import elo_from_score
from unplugged.agents.players import ScriptedBot
from unplugged.env import Function, StructuredAction, Target
from unplugged.evaluation import (EloRatings, SchemaError, WinRateMatrix, _solve_rating, elo_fit,
                                  expected_score, heatmap_svg, play_match, play_matches, report_markdown,
                                  report_table, robustness, schedule, score, win_rate_matrix)


class Fixed:
    """Deterministic agent cycling through a fixed action list."""

    def __init__(self, name, actions):
        self.name = name
        self.actions = actions

    def act(self, observations, rngs):
        return [self.actions[int(o.game_loop_frac * 512) % len(self.actions)] for o in observations]


RUSH = Fixed("rush", [StructuredAction(Function.BUILD, 1), StructuredAction(Function.ATTACK, 1, Target.ECON)])
ECO = Fixed("eco", [StructuredAction(Function.HARVEST, 1)])
TURTLE = Fixed("turtle", [StructuredAction(Function.BUILD, 2), StructuredAction(Function.ATTACK, 1, Target.ARMY),
                          StructuredAction(Function.HARVEST, 1)])


def matrix(agents, f, games=None):
    f = np.array(f, dtype=float)
    n = len(agents)
    return WinRateMatrix(list(agents), f, np.full((n, n), 100) if games is None else games, np.zeros((n, n), int))


def test_match_deterministic_and_mirrored():
    a = play_match(ECO, ECO, 1, 42, a_side=0)
    b = play_match(ECO, ECO, 1, 42, a_side=1)
    assert a.outcome == -b.outcome
    bot = ScriptedBot(3)
    r1 = play_match(bot, ScriptedBot(4), 2, 9)
    r2 = play_match(bot, ScriptedBot(4), 2, 9)
    assert r1 == r2


def test_identical_stochastic_agents_mirror():
    bot = ScriptedBot(4)
    for seed in range(20):
        a = play_match(bot, bot, seed % 4, seed, a_side=0)
        b = play_match(bot, bot, seed % 4, seed, a_side=1)
        assert a.outcome == -b.outcome


def test_level5_beats_level0_in_matches():
    res = play_matches(ScriptedBot(5), ScriptedBot(0), schedule(1000, 0, (0, 1)))
    assert score(res) >= 0.95


def test_batched_play_equals_single_games():
    games = schedule(30, 5, (0, 1))
    batched = play_matches(ScriptedBot(4), ScriptedBot(2), games)
    single = [play_match(ScriptedBot(4), ScriptedBot(2), m, s, side) for m, s, side in games]
    assert batched == single


class Slow(Fixed):
    def act(self, observations, rngs):
        time.sleep(0.01)
        return super().act(observations, rngs)


def test_time_budget_forfeit():
    slow = Slow("slow", [StructuredAction(Function.HARVEST, 1)])
    r = play_match(slow, ECO, 0, 1, time_budget=0.001)
    assert r.forfeit == "a" and r.outcome == -1
    r = play_match(ECO, slow, 0, 1, time_budget=0.001)
    assert r.forfeit == "b" and r.outcome == 1
    assert play_match(ECO, slow, 0, 1).forfeit is None


def test_matrix_matches_direct_tally():
    agents = [RUSH, ECO, TURTLE]
    m = win_rate_matrix(agents, 9, seed=4)
    for i in range(3):
        for j in range(3):
            if i == j:
                assert m.f[i, j] == 0.5
                continue
            lo, hi = min(i, j), max(i, j)
            tally = 0.0
            for map_id, seed, side in schedule(9, 4, (lo, hi)):
                o = play_match(agents[lo], agents[hi], map_id, seed, side).outcome
                o = o if i == lo else -o
                tally += 1.0 if o > 0 else 0.5 if o == 0 else 0.0
            assert m.f[i, j] == tally / 9


@pytest.mark.parametrize("n", [1, 2, 7, 10])
def test_alternating_sides(n):
    sides = [s for _, _, s in schedule(n, 0, (0, 1))]
    assert sides.count(0) == math.ceil(n / 2)


def test_maps_uniform():
    maps = [m for m, _, _ in schedule(8000, 1, (0, 1))]
    assert np.allclose(np.bincount(maps) / 8000, 0.25, atol=0.02)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 500), st.data())
def test_matrix_antisymmetry_exact(n, data):
    wins = data.draw(st.integers(0, n))
    draws = data.draw(st.integers(0, n - wins))
    f = (wins + 0.5 * draws) / n
    assert f + (1.0 - f) == 1.0


def test_matrix_csv_round_trip():
    m = win_rate_matrix([RUSH, ECO], 4, seed=1)
    back = WinRateMatrix.from_csv(m.to_csv())
    assert back.agents == m.agents and np.array_equal(back.f, m.f) and np.array_equal(back.games, m.games)
    assert back.spec == m.spec
    with pytest.raises(SchemaError):
        WinRateMatrix.from_csv("a,b\n1,2\n")


def test_robustness_examples():
    m = matrix(["p", "q1", "q2", "q3"], [[0.5, 0.9, 0.5, 0.7], [0.1, 0.5, 0.5, 0.5],
                                         [0.5, 0.5, 0.5, 0.5], [0.3, 0.5, 0.5, 0.5]])
    assert robustness(m, ["q1", "q2", "q3"])["p"] == 0.5
    m = matrix(["p", "q"], [[0.5, 1.0], [0.0, 0.5]])
    assert robustness(m, ["q"])["p"] == 1.0
    with pytest.raises(ValueError):
        robustness(m, [])


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 6), st.integers(0, 10**6))
def test_robustness_monotone_in_reference_set(n, seed):
    rng = np.random.default_rng(seed)
    f = rng.random((n, n))
    f = np.triu(f, 1) + np.tril(1 - f.T, -1)
    np.fill_diagonal(f, 0.5)
    m = matrix([f"a{i}" for i in range(n)], f)
    small = robustness(m, m.agents[:2])
    big = robustness(m, m.agents[:3])
    assert all(big[a] <= small[a] for a in m.agents)


def test_robustness_follows_elo_in_transitive_league():
    ratings = [1000, 1200, 1400, 1700]
    f = np.array([[expected_score(a, b) for b in ratings] for a in ratings])
    names = ["a", "b", "c", "d"]
    r = robustness(matrix(names, f), names)
    assert [r[n] for n in names] == sorted(r[n] for n in names)


def test_elo_symmetry_and_inversion():
    m = matrix(["p", "anchor"], [[0.5, 0.5], [0.5, 0.5]])
    assert abs(elo_fit(m, {"anchor": 1000}).ratings["p"] - 1000) <= 1e-6
    m = matrix(["p", "anchor"], [[0.5, 10 / 11], [1 / 11, 0.5]])
    e = elo_fit(m, {"anchor": 1000}, tol=1e-6).ratings["p"]
    assert abs(e - 1400) <= 1e-6
    assert abs(e - elo_from_score(10 / 11, 1000)) <= 1e-6


def test_elo_anchor_untouched_and_translation():
    rng = np.random.default_rng(3)
    planted = [1000, 1300, 900, 1150]
    f = np.array([[expected_score(a, b) for b in planted] for a in planted])
    f = np.clip(f + rng.normal(0, 0.01, f.shape), 0.01, 0.99)
    f = np.triu(f, 1) + np.tril(1 - f.T, -1)
    np.fill_diagonal(f, 0.5)
    names = ["anchor", "x", "y", "z"]
    m = matrix(names, f)
    a = elo_fit(m, {"anchor": 1000})
    b = elo_fit(m, {"anchor": 1000 + 250.0})
    assert a.ratings["anchor"] == 1000 and b.ratings["anchor"] == 1250
    for n in names[1:]:
        assert abs((b.ratings[n] - a.ratings[n]) - 250.0) <= 1e-9


def test_elo_saturated_is_unbounded():
    m = matrix(["p", "anchor"], [[0.5, 1.0], [0.0, 0.5]])
    out = elo_fit(m, {"anchor": 1000})
    assert out.unbounded == {"p": "+inf"} and out.ratings["p"] == math.inf
    with pytest.raises(ValueError):
        elo_fit(m, {})


@settings(max_examples=30, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(-3000, 3000))
def test_scalar_solver_independent_of_start(s, e0):
    a = _solve_rating(np.array([s]), np.array([0.0]), np.array([1.0]), e0, 1e-6)
    b = _solve_rating(np.array([s]), np.array([0.0]), np.array([1.0]), 0.0, 1e-6)
    assert abs(a - b) <= 1e-6
    assert abs(a - elo_from_score(s, 0.0)) <= 1e-6


def test_report_artifacts():
    names = ["bc", "oac", "bot5"]
    f = np.array([[0.5, 0.4, 0.45], [0.6, 0.5, 0.55], [0.55, 0.45, 0.5]])
    m = matrix(names, f)
    ratings = elo_fit(m, {"bot5": 1000})
    rob = robustness(m, names)
    rows = report_table(m, ratings, rob, "bot5")
    assert list(rows[0]) == ["agent", "Robustness", "Elo", "vs bot5"]
    assert rows[1]["vs bot5"] == pytest.approx(55.0)
    md = report_markdown(rows)
    assert md.startswith("| agent | Robustness | Elo | vs bot5 |")
    svg = heatmap_svg(m)
    assert svg.startswith("<svg") and ">60<" in svg and ">45<" in svg
    text = ratings.to_csv(rob)
    assert text.splitlines()[2] == "agent,elo,anchored,unbounded,robustness"
