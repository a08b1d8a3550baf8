"""Offline actor-critic (OAC) and its emphatic variant (E-OAC).

Both start from a behavior-cloning-with-value network.  The frozen copy of
that network supplies the behavior policy and, by default, the critic.  Only
the function and delay arguments are improved; the target head never moves.
"""

from __future__ import annotations

import logging

import numpy as np

from unplugged import autodiff as ad
from unplugged.agents.emphatic import EmphaticState, emphatic_traces
from unplugged.agents.training import DependencyError, Learner, TrainConfig, _split, default_config
from unplugged.agents.vtrace import draw_horizons, vtrace_targets
from unplugged.network import (NetworkParams, _backprop, delay_logits, encode, forward_policy,
                               function_logits, names_in, value)
from unplugged.replay import Batch, ReplayDataset, RolloutSampler, SequentialLanes

log = logging.getLogger(__name__)


def _chosen_log_prob(lf: np.ndarray, ld: np.ndarray, f: np.ndarray, d: np.ndarray) -> np.ndarray:
    rows = np.arange(len(f))
    return ad.log_softmax(lf)[rows, f] + ad.log_softmax(ld)[rows, d]


class ActorCriticLearner(Learner):
    """V-trace policy gradient on the function and delay heads."""

    kind = "oac"

    def __init__(self, dataset: ReplayDataset, config: TrainConfig, init: NetworkParams | None = None):
        if init is None:
            raise DependencyError(f"{config.kind} requires a bc-value checkpoint (--init-from)")
        super().__init__(dataset, config, init)
        self.behavior = init.copy()
        self.force_unit_traces = False
        self.setup_data()

    def setup_data(self):
        self.sampler = RolloutSampler(self.data, self.config.K, self.rng)

    def next_batch(self) -> tuple[Batch, np.ndarray | None]:
        idx, valid = self.sampler.sample_indices(self.config.M)
        return self.data.columns.take(idx, valid), None

    def trainable(self):
        groups = ["trunk", "function", "delay"]
        if self.config.critic == "v_pi":
            groups.append("value")
        return names_in(groups, self.config.net)

    def trace_weights(self, vt, log_rhos, batch, positions) -> np.ndarray:
        return np.ones_like(vt.rho_bar)

    def commit_traces(self) -> dict:
        return {}

    def compute_update(self):
        c = self.config
        batch, positions = self.next_batch()
        return self.update_from_batch(batch, positions, draw_horizons(self.rng, c.M, (c.n_lo, c.n_hi)))

    def update_from_batch(self, batch: Batch, positions, horizons):
        c = self.config
        M, K1 = batch.shape
        K = K1 - 1
        x = batch.x.reshape(M * K1, -1)
        f, d, t = batch.function.ravel(), batch.delay.ravel(), batch.target.ravel()
        mu = forward_policy(self.behavior, x, teacher=(f, d, t))
        log_mu = _chosen_log_prob(mu.function_logits, mu.delay_logits, f, d).reshape(M, K1)
        v_mu = mu.value.reshape(M, K1)
        diag = {}

        def build(P):
            h = encode(P, x)
            lf = function_logits(P, h)
            ld = delay_logits(P, h, f)
            log_pi = _chosen_log_prob(lf.value, ld.value, f, d).reshape(M, K1)
            v_node = value(P, h) if c.critic == "v_pi" else None
            values = v_node.value.reshape(M, K1) if v_node is not None else v_mu
            log_rhos = log_pi[:, :K] - log_mu[:, :K]
            vt = vtrace_targets(log_rhos, values, batch.reward, batch.game_loop_delta, c.gamma0,
                                horizons, batch.is_last, batch.is_first, batch.valid,
                                c.rho_max, c.c_max)
            F = np.ones_like(vt.rho_bar) if self.force_unit_traces else \
                self.trace_weights(vt, log_rhos, batch, positions)
            w = np.zeros((M, K1))
            w[:, :K] = vt.pg_advantage * F / M
            terms = [ad.weighted_cross_entropy(lf, f, w.ravel()),
                     ad.weighted_cross_entropy(ld, d, w.ravel())]
            if v_node is not None:
                wv = np.zeros((M, K1))
                wv[:, :K] = vt.transition_ok / M
                terms.append(ad.weighted_squared_error(v_node, vt.v.ravel(), wv.ravel()))
            ok = vt.transition_ok
            diag.update(mean_rho_bar=float(vt.rho_bar[ok].mean()) if ok.any() else 1.0,
                        mean_rho=vt.mean_rho, mean_F=float(F[ok].mean()) if ok.any() else 1.0,
                        mean_advantage=float(vt.pg_advantage[ok].mean()) if ok.any() else 0.0)
            return ad.total(terms)

        loss, grads = _backprop(self.params, build, self.trainable())
        diag.update(self.commit_traces())
        diag["loss"] = loss
        return grads, diag

    def extra_state(self):
        arrays = {f"behavior/{k}": v for k, v in self.behavior.arrays.items()}
        return {"resamples": self.sampler.resamples}, arrays

    def load_extra_state(self, meta, arrays):
        self.behavior = NetworkParams(self.config.net, _split(arrays, "behavior/"))
        self.sampler.resamples = meta["resamples"]


class EmphaticLearner(ActorCriticLearner):
    """OAC whose per-step policy-gradient terms are weighted by emphatic traces."""

    kind = "e-oac"

    def setup_data(self):
        c = self.config
        self.lanes = SequentialLanes(self.data, c.M, c.K, self.rng)
        self.traces = EmphaticState.initial(c.M, c.emphatic_n)
        self._pending = None
        self.alarms = 0

    def next_batch(self):
        return self.lanes.next_batch()

    def trace_weights(self, vt, log_rhos, batch, positions):
        K = vt.rho_bar.shape[1]
        rho = vt.rho_bar if self.config.clip_rho_in_trace else np.exp(log_rhos)
        gamma = np.where(batch.is_first[:, :K], 0.0, vt.gamma[:, :K])
        F, self._pending = emphatic_traces(rho, gamma, self.traces, positions)
        return F

    def commit_traces(self):
        if self._pending is None:
            # forced unit traces still advance the lane history
            return {}
        self.traces, self._pending = self._pending, None
        mean_f = float(self.traces.F.mean())
        if mean_f > self.config.emphatic_alarm:
            self.alarms += 1
            log.warning("emphatic trace divergence: mean F %.1f exceeds %.1f",
                        mean_f, self.config.emphatic_alarm)
        return {"f_alarm": int(mean_f > self.config.emphatic_alarm)}

    def extra_state(self):
        arrays = {f"behavior/{k}": v for k, v in self.behavior.arrays.items()}
        arrays.update(self.traces.arrays())
        meta = {"lanes": {"position": self.lanes.position.tolist(),
                          "lanes": [lane.tolist() for lane in self.lanes.lanes]},
                "alarms": self.alarms}
        return meta, arrays

    def load_extra_state(self, meta, arrays):
        self.behavior = NetworkParams(self.config.net, _split(arrays, "behavior/"))
        self.traces = EmphaticState.restore(self.config.emphatic_n, arrays)
        self.lanes.position = np.array(meta["lanes"]["position"], dtype=np.int64)
        self.lanes.lanes = [np.array(lane, dtype=np.int64) for lane in meta["lanes"]["lanes"]]
        self.alarms = meta["alarms"]


def train_oac(dataset: ReplayDataset, bc_value_params: NetworkParams, config: TrainConfig | None = None,
              **kw) -> NetworkParams:
    config = config or default_config("oac")
    return ActorCriticLearner(dataset, config, init=bc_value_params).run(**kw)


def train_eoac(dataset: ReplayDataset, bc_value_params: NetworkParams, config: TrainConfig | None = None,
               **kw) -> NetworkParams:
    config = config or default_config("e-oac")
    return EmphaticLearner(dataset, config, init=bc_value_params).run(**kw)
