"""Behavior cloning, fine-tuned behavior cloning, and behavior cloning with a value head."""

from __future__ import annotations

import numpy as np

from unplugged.agents.training import (DependencyError, Learner, TrainConfig, default_config)
from unplugged.network import LossBatch, LossSpec, NetworkParams, loss_and_grad
from unplugged.replay import ReplayDataset, RolloutSampler


class BCLearner(Learner):
    """Cross-entropy on all three action arguments (plus optional value MSE and L2)."""

    kind = "bc"

    def __init__(self, dataset, config, init=None):
        super().__init__(dataset, config, init)
        self.sampler = RolloutSampler(self.data, config.K, self.rng)
        self.spec = LossSpec(1.0, 1.0, 1.0, config.value_weight, config.weight_decay)

    def make_batch(self) -> LossBatch:
        c = self.config
        idx, valid = self.sampler.sample_indices(c.M)
        idx, valid = idx[:, :c.K].ravel(), valid[:, :c.K].ravel()
        cols = self.data.columns
        return LossBatch(cols.x[idx], cols.function[idx], cols.delay[idx], cols.target[idx],
                         value_target=cols.outcome[idx], weight=valid / c.M)

    def compute_update(self):
        loss, grads = loss_and_grad(self.params, self.spec, self.make_batch())
        return grads, {"loss": loss}

    def extra_state(self):
        return {"resamples": self.sampler.resamples}, {}

    def load_extra_state(self, meta, arrays):
        self.sampler.resamples = meta["resamples"]


class FineTuneLearner(BCLearner):
    kind = "ft-bc"


class BCValueLearner(BCLearner):
    kind = "bc-value"


def train_bc(dataset: ReplayDataset, config: TrainConfig | None = None, **kw) -> NetworkParams:
    config = config or default_config("bc")
    return BCLearner(dataset, config).run(**kw)


def finetune_bc(params: NetworkParams, dataset: ReplayDataset, config: TrainConfig | None = None,
                **kw) -> NetworkParams:
    if params is None:
        raise DependencyError("ft-bc needs a trained bc checkpoint")
    config = config or default_config("ft-bc")
    return FineTuneLearner(dataset, config, init=params).run(**kw)


def train_bc_value(dataset: ReplayDataset, config: TrainConfig | None = None, **kw) -> NetworkParams:
    config = config or default_config("bc-value")
    return BCValueLearner(dataset, config).run(**kw)


def value_sign_accuracy(params: NetworkParams, dataset: ReplayDataset) -> float:
    """Fraction of steps where sign(V) matches the episode outcome (draws excluded)."""
    from unplugged.network import constants, encode, value
    cols = dataset.columns
    keep = cols.outcome != 0
    P = constants(params)
    v = value(P, encode(P, cols.x[keep])).value
    return float(np.mean(np.sign(v) == cols.outcome[keep]))
