"""Sampled-action MCTS over the learned latent model, batched across games.

Search runs over the joint (function, delay) action; the joint index is
``function * N_DELAYS + delay``.  Each expanded node draws
``n_sampled_actions`` joint actions from the policy decoder and uses their
empirical frequencies as the prior, so only sampled actions are searchable.
There are no intermediate rewards and no discounting: each simulation backs
up the value decoder's estimate at the new leaf.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from unplugged.env import N_DELAYS, N_FUNCTIONS
from unplugged.network import (NetworkParams, constants, delay_logits, dynamics, encode,
                               function_logits, sample_from_probs, tempered_probs, value)

N_JOINT = N_FUNCTIONS * N_DELAYS


@dataclasses.dataclass(frozen=True)
class MCTSConfig:
    n_simulations: int = 32
    n_sampled_actions: int = 20
    pb_c_init: float = 1.25
    pb_c_base: float = 19652.0
    temperature: float = 0.0        # root selection from visit counts; 0 means argmax
    prior_temperature: float = 1.0  # softmax temperature of the policy decoder

    def __post_init__(self):
        if self.n_sampled_actions < 1:
            raise ValueError("n_sampled_actions must be >= 1")
        if self.n_simulations < 0:
            raise ValueError("n_simulations must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class NetworkModel:
    """Encoder, dynamics and decoders of a trained network as a search model."""

    def __init__(self, params: NetworkParams, prior_temperature: float = 1.0):
        self.P = constants(params)
        self.prior_temperature = prior_temperature

    def represent(self, x: np.ndarray) -> np.ndarray:
        return encode(self.P, np.atleast_2d(x)).value

    def predict(self, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        B = len(h)
        pf = tempered_probs(function_logits(self.P, h).value, self.prior_temperature)
        joint = np.empty((B, N_JOINT))
        for f in range(N_FUNCTIONS):
            ld = delay_logits(self.P, h, np.full(B, f)).value
            joint[:, f * N_DELAYS:(f + 1) * N_DELAYS] = pf[:, f:f + 1] * tempered_probs(ld, self.prior_temperature)
        return joint, value(self.P, h).value

    def transition(self, h: np.ndarray, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a)
        return dynamics(self.P, h, a // N_DELAYS, a % N_DELAYS).value


def _uniforms(rngs, B: int, n: int) -> np.ndarray:
    if isinstance(rngs, np.random.Generator):
        return rngs.random((B, n))
    return np.stack([r.random(n) for r in rngs])


def sampled_prior(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Empirical frequency of ``uniforms.shape[1]`` draws from each row of ``probs``."""
    B, n = uniforms.shape
    draws = sample_from_probs(np.repeat(probs[:, None, :], n, axis=1), uniforms)
    counts = np.zeros_like(probs)
    np.add.at(counts, (np.repeat(np.arange(B), n), draws.ravel()), 1.0)
    return counts / n


@dataclasses.dataclass
class SearchResult:
    action: np.ndarray        # (B,) joint index
    root_visits: np.ndarray   # (B, N_JOINT)
    root_prior: np.ndarray    # (B, N_JOINT)
    root_value: np.ndarray    # (B,)


def search(model, x: np.ndarray, cfg: MCTSConfig, rngs) -> SearchResult:
    """Run ``cfg.n_simulations`` simulations from each row of ``x``."""
    h0 = model.represent(x)
    B, L = h0.shape
    p0, v0 = model.predict(h0)
    A = p0.shape[1]
    if cfg.n_simulations == 0:
        action = sample_from_probs(p0, _uniforms(rngs, B, 1)[:, 0])
        return SearchResult(action, np.zeros((B, A)), p0, v0)

    cap = cfg.n_simulations + 1
    latent = np.zeros((B, cap, L))
    children = np.full((B, cap, A), -1, dtype=np.int64)
    prior = np.zeros((B, cap, A))
    visits = np.zeros((B, cap, A))
    total = np.zeros((B, cap, A))
    latent[:, 0] = h0
    prior[:, 0] = sampled_prior(p0, _uniforms(rngs, B, cfg.n_sampled_actions))
    n_nodes = np.ones(B, dtype=np.int64)
    q_min = np.full(B, np.inf)
    q_max = np.full(B, -np.inf)
    rows = np.arange(B)

    for _ in range(cfg.n_simulations):
        node = np.zeros(B, dtype=np.int64)
        active = np.ones(B, bool)
        path_nodes, path_actions, path_live = [], [], []
        leaf_parent = np.zeros(B, dtype=np.int64)
        leaf_action = np.zeros(B, dtype=np.int64)
        while active.any():
            a = _select(prior[rows, node], visits[rows, node], total[rows, node], q_min, q_max, cfg)
            path_nodes.append(node.copy())
            path_actions.append(a)
            path_live.append(active.copy())
            child = children[rows, node, a]
            stop = active & (child < 0)
            leaf_parent[stop] = node[stop]
            leaf_action[stop] = a[stop]
            active &= ~stop
            node = np.where(active, child, node)

        h = model.transition(latent[rows, leaf_parent], leaf_action)
        p, v = model.predict(h)
        new = n_nodes
        latent[rows, new] = h
        prior[rows, new] = sampled_prior(p, _uniforms(rngs, B, cfg.n_sampled_actions))
        children[rows, leaf_parent, leaf_action] = new
        n_nodes = n_nodes + 1

        for nd, ac, live in zip(path_nodes, path_actions, path_live):
            r = rows[live]
            visits[r, nd[live], ac[live]] += 1.0
            total[r, nd[live], ac[live]] += v[live]
            q = total[r, nd[live], ac[live]] / visits[r, nd[live], ac[live]]
            q_min[r] = np.minimum(q_min[r], q)
            q_max[r] = np.maximum(q_max[r], q)

    root_visits = visits[:, 0]
    if cfg.temperature == 0:
        action = np.argmax(root_visits, axis=1)
    else:
        weights = root_visits ** (1.0 / cfg.temperature)
        action = sample_from_probs(weights / weights.sum(axis=1, keepdims=True),
                                   _uniforms(rngs, B, 1)[:, 0])
    return SearchResult(action, root_visits, prior[:, 0], v0)


def _select(prior, visits, total, q_min, q_max, cfg: MCTSConfig) -> np.ndarray:
    parent = visits.sum(axis=1, keepdims=True)
    pb_c = cfg.pb_c_init + np.log((parent + cfg.pb_c_base + 1.0) / cfg.pb_c_base)
    # with no visits yet the exploration term still ranks children by prior
    u = prior * np.sqrt(np.maximum(parent, 1.0)) / (1.0 + visits) * pb_c
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(visits > 0, total / visits, 0.0)
    span = (q_max - q_min)[:, None]
    scale = span > 0
    q_norm = np.where(visits > 0, np.where(scale, (q - q_min[:, None]) / np.where(scale, span, 1.0), q), 0.0)
    score = np.where(prior > 0, q_norm + u, -np.inf)
    return np.argmax(score, axis=1)


def mcts_act(params: NetworkParams, x: np.ndarray, cfg: MCTSConfig, rngs) -> tuple[np.ndarray, np.ndarray]:
    """Searched (function, delay) indices for each row of encoded observations ``x``."""
    res = search(NetworkModel(params, cfg.prior_temperature), x, cfg, rngs)
    return res.action // N_DELAYS, res.action % N_DELAYS
