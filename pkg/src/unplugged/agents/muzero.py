"""MuZero-supervised training: BC and value losses through an unrolled latent model."""

from __future__ import annotations

import numpy as np

from unplugged.agents.training import Learner, TrainConfig, _split, default_config
from unplugged.network import (LossSpec, NetworkParams, UnrollBatch, constants, encode,
                               unroll_loss_and_grad, value)
from unplugged.replay import Columns, ReplayDataset


def value_targets(columns: Columns, local: np.ndarray, episodes: np.ndarray, td_n: int,
                  target_params: NetworkParams | None) -> np.ndarray:
    """n-step value targets for steps ``local`` (offsets inside ``episodes``).

    Rewards arrive only at the end of an episode and are undiscounted, so the
    target is the target network's value n steps ahead, or the outcome when
    that step falls past the episode end.  ``td_n = 0`` gives Monte-Carlo
    targets.
    """
    outcome = columns.outcome[columns.episode_start[episodes]][:, None]
    out = np.broadcast_to(outcome, local.shape).astype(np.float64).copy()
    if td_n <= 0 or target_params is None:
        return out
    lens = columns.episode_len[episodes][:, None]
    ahead = local + td_n
    boot = ahead < lens
    if boot.any():
        rows = (columns.episode_start[episodes][:, None] + ahead)[boot]
        P = constants(target_params)
        out[boot] = value(P, encode(P, columns.x[rows])).value
    return out


class MuZeroSupervisedLearner(Learner):
    kind = "mzs"

    def __init__(self, dataset: ReplayDataset, config: TrainConfig, init: NetworkParams | None = None):
        super().__init__(dataset, config, init)
        self.target = self.params.copy()
        self.spec = LossSpec(1.0, 1.0, 1.0, config.value_weight, 0.0)

    def make_batch(self) -> UnrollBatch:
        c = self.config
        cols = self.data.columns
        eps = self.rng.integers(len(cols.episode_len), size=c.M)
        lens = cols.episode_len[eps]
        start = self.rng.integers(0, lens)
        local = start[:, None] + np.arange(c.K)[None, :]
        mask = local < lens[:, None]
        idx = cols.episode_start[eps][:, None] + np.minimum(local, lens[:, None] - 1)
        vt = value_targets(cols, local, eps, c.td_n, self.target)
        return UnrollBatch(cols.x[idx[:, 0]], cols.function[idx], cols.delay[idx],
                           cols.target[idx[:, 0]], vt, mask, 1.0 / c.M)

    def compute_update(self):
        loss, grads = unroll_loss_and_grad(self.params, self.spec, self.make_batch())
        return grads, {"loss": loss}

    def after_update(self):
        if self.step_index % self.config.target_update == 0:
            self.target = self.params.copy()

    def extra_state(self):
        return {}, {f"target/{k}": v for k, v in self.target.arrays.items()}

    def load_extra_state(self, meta, arrays):
        self.target = NetworkParams(self.config.net, _split(arrays, "target/"))


def train_mzs(dataset: ReplayDataset, config: TrainConfig | None = None, **kw) -> NetworkParams:
    config = config or default_config("mzs")
    return MuZeroSupervisedLearner(dataset, config).run(**kw)
