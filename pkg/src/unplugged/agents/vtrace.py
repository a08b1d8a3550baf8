"""V-trace targets over rollouts with per-step, delay-based discounts.

Rollout arrays have shape (M, K+1): K training steps plus one bootstrap
step.  The transition t -> t+1 is discounted by gamma0 ** game_loop_delta[t+1].
The last step of an episode is terminal: nothing is bootstrapped past it,
and a transition that crosses into a new episode (sequential lanes) is
masked out.
"""

from __future__ import annotations

import dataclasses

import numpy as np


class BehaviorMismatch(ValueError):
    """The behavior policy gives zero probability to a logged action."""


@dataclasses.dataclass
class VTraceOutputs:
    delta: np.ndarray         # (M, K) TD errors
    rho_bar: np.ndarray       # (M, K) clipped importance ratios
    gamma: np.ndarray         # (M, K+1) gamma0 ** game_loop_delta
    v: np.ndarray             # (M, K+1) V-trace targets; v[:, K] = V[:, K]
    pg_advantage: np.ndarray  # (M, K) rho_bar * (r + gamma v' - V)
    transition_ok: np.ndarray # (M, K) transitions inside one episode and rollout
    mean_rho: float           # mean unclipped ratio over valid transitions


def draw_horizons(rng: np.random.Generator, m: int, n_range: tuple[int, int]) -> np.ndarray:
    """Mixed n-step: one horizon per rollout, uniform on [n_lo, n_hi]."""
    lo, hi = n_range
    return rng.integers(lo, hi + 1, size=m)


def vtrace_targets(log_rhos, values, rewards, game_loop_delta, gamma0: float, n,
                   is_last=None, is_first=None, valid=None,
                   rho_max: float = 1.0, c_max: float = 1.0) -> VTraceOutputs:
    """V-trace with truncation horizon ``n`` (scalar or one per rollout).

    ``log_rhos`` has shape (M, K); everything else (M, K+1).
    """
    log_rhos = np.atleast_2d(np.asarray(log_rhos, dtype=np.float64))
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    rewards = np.atleast_2d(np.asarray(rewards, dtype=np.float64))
    delta_loops = np.atleast_2d(np.asarray(game_loop_delta))
    M, K1 = values.shape
    K = K1 - 1
    if K < 1:
        raise ValueError("rollouts need at least two steps")
    if np.isneginf(log_rhos).any() or np.isnan(log_rhos).any():
        raise BehaviorMismatch("behavior probability is zero (or NaN) on a logged action")
    is_last = np.zeros((M, K1), bool) if is_last is None else np.atleast_2d(is_last)
    is_first = np.zeros((M, K1), bool) if is_first is None else np.atleast_2d(is_first)
    valid = np.ones((M, K1), bool) if valid is None else np.atleast_2d(valid)
    n = np.broadcast_to(np.asarray(n), (M,))

    gamma = np.power(gamma0, delta_loops.astype(np.float64))
    ok = valid[:, 1:] & valid[:, :-1] & ~is_first[:, 1:] & ~is_last[:, :-1]
    boot = gamma[:, 1:] * ~is_last[:, 1:]          # discount applied to V[t+1]
    rho = np.exp(log_rhos)
    rho_bar = np.minimum(rho_max, rho)
    c = np.minimum(c_max, rho)
    delta = np.where(ok, rewards[:, 1:] + boot * values[:, 1:] - values[:, :-1], 0.0)
    step = boot * c * ok                            # trace carried from t to t+1

    v = values.copy()
    coef = np.ones((M, K))
    s = np.arange(K)
    for j in range(int(n.max())):
        t = s + j
        inside = (t < K)[None, :] & (j < n)[:, None]
        tc = np.minimum(t, K - 1)
        v[:, :K] += np.where(inside, coef * rho_bar[:, tc] * delta[:, tc], 0.0)
        coef = coef * np.where(inside, step[:, tc], 0.0)

    adv = rho_bar * np.where(ok, rewards[:, 1:] + boot * v[:, 1:] - values[:, :-1], 0.0)
    mean_rho = float(rho[ok].mean()) if ok.any() else 1.0
    return VTraceOutputs(delta, rho_bar, gamma, v, adv, ok, mean_rho)
