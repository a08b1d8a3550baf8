"""Agents that play the duel: scripted bots, network policies and MCTS.

Every agent exposes ``act(observations, rngs) -> list[StructuredAction]``
acting on a batch of games at once, with one Generator per game.
"""

from __future__ import annotations

import numpy as np

from unplugged.agents.mcts import MCTSConfig, mcts_act
from unplugged.env import Observation, StructuredAction, scripted_policy
from unplugged.network import (NetworkParams, constants, encode, forward_policy, sample_from_probs,
                               target_logits, tempered_probs)
from unplugged.replay import encode_observations

DEFAULT_TEMPERATURE = 0.8


class ScriptedBot:
    def __init__(self, level: int):
        self.level = level
        self.name = f"bot{level}"

    def act(self, observations, rngs) -> list[StructuredAction]:
        return [scripted_policy(self.level, o, r) for o, r in zip(observations, rngs)]


def _features(observations, skill: float | None) -> np.ndarray:
    if skill is not None:
        observations = [o.with_skill(skill) for o in observations]
    return encode_observations(observations)


class PolicyAgent:
    """Autoregressive sampling from the network heads at temperature ``temperature``.

    ``target_params``, when given, supplies the target argument (the
    behavior network of an actor-critic agent).
    """

    def __init__(self, params: NetworkParams, name: str = "policy", temperature: float = DEFAULT_TEMPERATURE,
                 skill: float | None = 1.0, target_params: NetworkParams | None = None):
        self.params = params
        self.name = name
        self.temperature = temperature
        self.skill = skill
        self.target_params = target_params

    def act(self, observations: list[Observation], rngs) -> list[StructuredAction]:
        out = forward_policy(self.params, _features(observations, self.skill), rng=list(rngs),
                             temperature=self.temperature, target_params=self.target_params)
        return [StructuredAction.from_indices(int(f), int(d), int(t))
                for f, d, t in zip(out.function, out.delay, out.target)]


class MCTSAgent:
    """Search over (function, delay); the target argument comes from the target head."""

    def __init__(self, params: NetworkParams, config: MCTSConfig | None = None, name: str = "mcts",
                 skill: float | None = 1.0, temperature: float = DEFAULT_TEMPERATURE):
        self.params = params
        self.config = config or MCTSConfig()
        self.name = name
        self.skill = skill
        self.temperature = temperature

    def act(self, observations: list[Observation], rngs) -> list[StructuredAction]:
        rngs = list(rngs)
        x = _features(observations, self.skill)
        f, d = mcts_act(self.params, x, self.config, rngs)
        P = constants(self.params)
        lt = target_logits(P, encode(P, x), f, d).value
        u = np.array([r.random() for r in rngs])
        t = sample_from_probs(tempered_probs(lt, self.temperature), u)
        return [StructuredAction.from_indices(int(a), int(b), int(c)) for a, b, c in zip(f, d, t)]


def agent_from_checkpoint(ckpt, name: str | None = None, temperature: float = DEFAULT_TEMPERATURE,
                          mcts: MCTSConfig | None = None):
    """Inference agent for a finished training checkpoint; skill pinned to the data maximum."""
    name = name or ckpt.kind
    if mcts is not None:
        return MCTSAgent(ckpt.params, mcts, name, ckpt.inference_skill, temperature)
    return PolicyAgent(ckpt.params, name, temperature, ckpt.inference_skill, ckpt.behavior)
