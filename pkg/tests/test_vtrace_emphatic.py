import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import emphatic_bruteforce, n_step_returns, vtrace_recursive
from unplugged.agents.emphatic import EmphaticState, LaneDiscontinuity, emphatic_traces
from unplugged.agents.vtrace import BehaviorMismatch, draw_horizons, vtrace_targets


def random_rollout(rng, K, on_policy=False):
    lr = np.zeros(K) if on_policy else rng.normal(0, 0.7, K)
    values = rng.uniform(-1, 1, K + 1)
    rewards = rng.choice([0.0, 0.0, 0.0, 1.0, -1.0], size=K + 1)
    deltas = rng.choice([1, 2, 4, 8], size=K + 1)
    is_last = rng.random(K + 1) < 0.1
    is_first = np.zeros(K + 1, bool)
    is_first[1:] = is_last[:-1] & (rng.random(K) < 0.5)
    valid = np.ones(K + 1, bool)
    if rng.random() < 0.3:
        valid[rng.integers(1, K + 1):] = False
    return lr, values, rewards, deltas, is_last, is_first, valid


def test_telescoping_example():
    out = vtrace_targets(np.zeros((1, 2)), np.zeros((1, 3)), np.array([[0, 0, 1.0]]),
                         np.zeros((1, 3)), 1.0, 2)
    assert out.v[0, 0] == 1.0


def test_constant_value_fixed_point():
    out = vtrace_targets(np.zeros((1, 5)), np.full((1, 6), 0.3), np.zeros((1, 6)), np.zeros((1, 6)), 1.0, 3)
    assert np.all(out.delta == 0) and np.allclose(out.v, 0.3)


def test_gamma_from_loop_delta():
    out = vtrace_targets(np.zeros((1, 2)), np.zeros((1, 3)), np.zeros((1, 3)), np.array([[0, 4, 8]]), 0.9, 2)
    assert np.allclose(out.gamma, [[1.0, 0.9 ** 4, 0.9 ** 8]])


def test_recursive_oracle_many_rollouts():
    rng = np.random.default_rng(0)
    for _ in range(300):
        K = int(rng.integers(1, 65))
        lr, values, rewards, deltas, is_last, is_first, valid = random_rollout(rng, K)
        n = int(rng.integers(1, 20))
        out = vtrace_targets(lr[None], values[None], rewards[None], deltas[None], 0.97, n,
                             is_last[None], is_first[None], valid[None])
        ref = vtrace_recursive(lr, values, rewards, deltas, 0.97, n, is_last, is_first, valid)
        assert np.max(np.abs(out.v[0] - ref)) <= 1e-10


def test_on_policy_equals_n_step_returns():
    rng = np.random.default_rng(1)
    for _ in range(200):
        K = int(rng.integers(1, 40))
        _, values, rewards, deltas, is_last, _, _ = random_rollout(rng, K, on_policy=True)
        n = int(rng.integers(1, 50))
        out = vtrace_targets(np.zeros((1, K)), values[None], rewards[None], deltas[None], 0.95, n,
                             is_last[None])
        ref = n_step_returns(values, rewards, deltas, 0.95, n, is_last)
        assert np.max(np.abs(out.v[0] - ref)) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_vtrace_output_invariants(seed):
    rng = np.random.default_rng(seed)
    M, K = 3, int(rng.integers(1, 12))
    lr = rng.normal(0, 2, (M, K))
    out = vtrace_targets(lr, rng.uniform(-1, 1, (M, K + 1)), rng.uniform(-1, 1, (M, K + 1)),
                         rng.integers(0, 9, (M, K + 1)), 0.99, draw_horizons(rng, M, (1, 6)))
    assert np.all((out.rho_bar >= 0) & (out.rho_bar <= 1))
    assert np.all((out.gamma > 0) & (out.gamma <= 1))
    assert np.all(np.isfinite(out.v)) and np.all(np.isfinite(out.delta))


def test_zero_behavior_probability_is_diagnosed():
    with pytest.raises(BehaviorMismatch):
        vtrace_targets(np.array([[-np.inf]]), np.zeros((1, 2)), np.zeros((1, 2)),
                       np.zeros((1, 2)), 1.0, 1)


def test_horizons_uniform_range():
    n = draw_horizons(np.random.default_rng(0), 10_000, (8, 16))
    assert n.min() == 8 and n.max() == 16
    assert np.allclose(np.bincount(n)[8:] / 10_000, 1 / 9, atol=0.02)


# ------------------------------------------------------------ emphatic

def test_unit_ratios_count_up():
    F, _ = emphatic_traces(np.ones((1, 6)), np.ones((1, 6)), EmphaticState.initial(1, 1, rho_init=1.0))
    assert np.array_equal(F[0], [2, 3, 4, 5, 6, 7])


def test_zero_ratios_give_one():
    F, _ = emphatic_traces(np.zeros((2, 5)), np.ones((2, 5)), EmphaticState.initial(2, 3))
    assert np.all(F == 1.0)


def _stream(rho, gamma, n, state, chunks):
    out, pos = [], 0
    for size in chunks:
        F, state = emphatic_traces(rho[:, pos:pos + size], gamma[:, pos:pos + size], state,
                                   positions=state.position.copy())
        out.append(F)
        pos += size
    return np.concatenate(out, axis=1), state


def test_streaming_matches_bruteforce_across_boundaries():
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(1, 6))
        T = int(rng.integers(1, 64))
        rho = rng.uniform(0, 1.2, (1, T))
        gamma = np.where(rng.random((1, T)) < 0.1, 0.0, rng.uniform(0.9, 1.0, (1, T)))
        cuts = np.sort(rng.choice(np.arange(1, T), size=min(T - 1, int(rng.integers(0, 4))), replace=False)) \
            if T > 1 else np.array([], dtype=int)
        chunks = np.diff(np.concatenate([[0], cuts, [T]])).astype(int)
        f0, r0, g0 = rng.uniform(0.5, 2, n), rng.uniform(0, 1, n), rng.uniform(0.9, 1, n)
        state = EmphaticState(n, f0[None].copy(), r0[None].copy(), g0[None].copy(), np.zeros(1, int))
        F, _ = _stream(rho, gamma, n, state, chunks)
        ref = emphatic_bruteforce(rho[0], gamma[0], n, f0, r0, g0)
        assert np.max(np.abs(F[0] - ref)) <= 1e-10 * max(1.0, np.abs(ref).max())


def test_fresh_lane_first_n_traces_are_one():
    F, _ = emphatic_traces(np.full((1, 6), 0.9), np.ones((1, 6)), EmphaticState.initial(1, 3))
    assert np.array_equal(F[0, :3], [1.0, 1.0, 1.0]) and F[0, 3] > 1.0


def test_lane_discontinuity_detected():
    state = EmphaticState.initial(2, 2)
    _, state = emphatic_traces(np.ones((2, 3)), np.ones((2, 3)), state, positions=np.zeros(2, int))
    with pytest.raises(LaneDiscontinuity):
        emphatic_traces(np.ones((2, 3)), np.ones((2, 3)), state, positions=np.array([3, 6]))


def test_state_round_trip():
    state = EmphaticState.initial(2, 3)
    _, state = emphatic_traces(np.full((2, 4), 0.5), np.ones((2, 4)), state)
    back = EmphaticState.restore(3, {k: v.copy() for k, v in state.arrays().items()})
    a, _ = emphatic_traces(np.ones((2, 2)), np.ones((2, 2)), state)
    b, _ = emphatic_traces(np.ones((2, 2)), np.ones((2, 2)), back)
    assert np.array_equal(a, b)
