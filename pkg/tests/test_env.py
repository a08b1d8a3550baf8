import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from unplugged import env
from unplugged.env import (DELAYS, L_MAX, VALID_ACTIONS, ContractViolation, Function, StructuredAction,
                           Target, advance, apply, new_game, observe, play_game, scripted_policy)


def test_new_game_initial_economy():
    for m in range(4):
        s = new_game(0, m)
        assert [p.economy for p in s.players] == [4 + m, 4 + m]
        assert [p.army for p in s.players] == [0, 0]
        assert s.game_loop == 0 and s.terminal is None


def test_new_game_rejects_bad_map():
    with pytest.raises(ValueError):
        new_game(0, 4)
    with pytest.raises(ValueError):
        new_game(0, -1)


def test_new_game_deterministic():
    assert new_game(5, 2).fingerprint() == new_game(5, 2).fingerprint()


def test_structured_action_canonical_target():
    assert StructuredAction(Function.BUILD, 2, Target.ARMY).target == Target.ECON
    assert StructuredAction(Function.ATTACK, 2, Target.ARMY).target == Target.ARMY
    with pytest.raises(ValueError):
        StructuredAction(Function.BUILD, 3)
    assert len(VALID_ACTIONS) == 24


def test_advance_first_observation():
    s = new_game(0, 0)
    pid, obs = advance(s)
    assert pid == 0 and obs.prev_delay == 0


def test_advance_schedule_min():
    s = new_game(0, 0)
    advance(s)
    apply(s, 0, StructuredAction(Function.NOOP, 4))
    advance(s)
    apply(s, 1, StructuredAction(Function.NOOP, 2))
    pid, obs = advance(s)
    assert pid == 1 and s.game_loop == 2


def test_advance_tie_and_prev_delay():
    s = new_game(0, 0)
    advance(s)
    apply(s, 0, StructuredAction(Function.NOOP, 8))
    advance(s)
    apply(s, 1, StructuredAction(Function.NOOP, 8))
    pid, obs = advance(s)
    assert pid == 0 and s.game_loop == 8 and obs.prev_delay == 8


def test_harvest_and_failed_build():
    s = new_game(0, 0)
    advance(s)
    apply(s, 0, StructuredAction(Function.HARVEST, 1))
    assert s.players[0].economy == 5
    s = new_game(0, 0)
    s.players[0].economy = 1
    advance(s)
    apply(s, 0, StructuredAction(Function.BUILD, 2))
    assert (s.players[0].economy, s.players[0].army) == (1, 0)
    assert s.players[0].next_act_loop == 2


def test_attack_matches_seeded_binomial_replay():
    s = new_game(11, 1)
    s.players[0].army = 3
    s.players[1].economy = 2
    oracle_rng = env.game_rng(11, 1)
    hits = int(np.sum(oracle_rng.random(3) < 0.5))
    advance(s)
    apply(s, 0, StructuredAction(Function.ATTACK, 1, Target.ECON))
    assert s.players[1].economy == 2 - hits
    assert (s.terminal is not None) == (2 - hits <= 0)


def test_out_of_turn_and_terminal_errors():
    s = new_game(0, 0)
    with pytest.raises(ContractViolation):
        apply(s, 1, StructuredAction(Function.NOOP, 1))
    s.terminal = (1, -1)
    with pytest.raises(ContractViolation):
        advance(s)


def test_level0_uniform_chi_square():
    rng = np.random.default_rng(0)
    obs = observe(new_game(0, 0), 0)
    counts = np.zeros(len(VALID_ACTIONS))
    index = {a: i for i, a in enumerate(VALID_ACTIONS)}
    for _ in range(100_000):
        counts[index[scripted_policy(0, obs, rng)]] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


def test_level5_attacks_with_army():
    obs = dataclasses.replace(observe(new_game(0, 0), 0), own_army=3)
    rng = np.random.default_rng(1)
    for _ in range(200):
        assert scripted_policy(5, obs, rng) == StructuredAction(Function.ATTACK, 2, Target.ECON)


def test_level3_heuristic_frequency():
    obs = dataclasses.replace(observe(new_game(0, 0), 0), own_army=3)
    rng = np.random.default_rng(2)
    hits = sum(scripted_policy(3, obs, rng, return_branch=True)[1] for _ in range(100_000))
    assert abs(hits / 100_000 - 0.6) <= 0.01


def _bots(seed, a=5, b=5):
    rngs = [np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])]
    return [lambda o, r=rngs[0]: scripted_policy(a, o, r), lambda o, r=rngs[1]: scripted_policy(b, o, r)]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), map_id=st.integers(0, 3), a=st.integers(0, 5), b=st.integers(0, 5))
def test_game_invariants(seed, map_id, a, b):
    log = play_game(seed, map_id, _bots(seed, a, b))
    assert sum(log.outcome) == 0 and log.outcome[0] in (-1, 0, 1)
    assert log.final_loop <= L_MAX
    for pid in (0, 1):
        obs, acts, loops = log.observations[pid], log.actions[pid], log.act_loops[pid]
        assert obs[0].prev_delay == 0
        for t in range(1, len(obs)):
            assert obs[t].prev_delay == acts[t - 1].delay
            assert loops[t] - loops[t - 1] == acts[t - 1].delay
        for o in obs:
            assert (o.opp_economy == -1 and o.opp_army == -1) == (not o.opp_visible)


def test_game_deterministic():
    a = play_game(7, 2, _bots(7))
    b = play_game(7, 2, _bots(7))
    assert a.outcome == b.outcome and a.actions == b.actions and a.observations == b.observations


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), econ=st.integers(0, 30), army=st.integers(0, 30))
def test_hidden_opponent_stats_do_not_leak(seed, econ, army):
    s = new_game(seed, 0)
    pid, base = advance(s)
    assert not base.opp_visible
    s.players[1].economy, s.players[1].army = econ + 1, army
    assert observe(s, 0) == base


def test_timeout_outcome_sign():
    s = new_game(0, 0)
    s.players[0].next_act_loop = s.players[1].next_act_loop = L_MAX - 1
    s.game_loop = L_MAX - 1
    s.players[0].economy = 9
    advance(s)
    apply(s, 0, StructuredAction(Function.NOOP, 8))
    advance(s)
    apply(s, 1, StructuredAction(Function.NOOP, 8))
    assert s.terminal == (1, -1) and s.game_loop == L_MAX


def test_level5_beats_level0():
    wins = 0
    for g in range(1000):
        side = g % 2
        levels = (5, 0) if side == 0 else (0, 5)
        log = play_game(g, g % 4, _bots(g, *levels))
        wins += log.outcome[side] == 1
    assert wins / 1000 >= 0.95
