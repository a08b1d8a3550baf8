"""Run configuration, learner base class, checkpoints and training logs."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
from pathlib import Path

import numpy as np

from unplugged import bundle
from unplugged.network import NetConfig, NetworkParams, init_params
from unplugged.optim import Clip, OptimizerState, cosine_lr, optimizer_step
from unplugged.replay import SKILL_MAX, ReplayDataset

log = logging.getLogger(__name__)

KINDS = ("bc", "ft-bc", "bc-value", "oac", "e-oac", "mzs")
PREREQUISITE = {"ft-bc": "bc", "oac": "bc-value", "e-oac": "bc-value"}


class DependencyError(RuntimeError):
    """A training stage was started without the checkpoint it builds on."""


@dataclasses.dataclass
class TrainConfig:
    """Every knob of every training procedure, with desk-scale defaults.

    Use :func:`default_config` to get the per-procedure defaults.
    """
    kind: str = "bc"
    seed: int = 0
    n_frames: int = 10_000_000
    M: int = 256
    K: int = 1
    lr0: float = 5e-4
    n_ramp: float = 0.0
    clip: str = "before:10"
    optimizer: str = "adam"
    weight_decay: float = 1e-6
    value_weight: float = 0.0
    min_skill: float = 3500.0
    outcome_filter: str = "win_and_loss"
    # actor-critic
    gamma0: float = 0.99995
    n_lo: int = 8
    n_hi: int = 16
    rho_max: float = 1.0
    c_max: float = 1.0
    critic: str = "v_mu"
    emphatic_n: int = 8
    clip_rho_in_trace: bool = True
    emphatic_alarm: float = 100.0
    # muzero supervised
    td_n: int = 32  # 0 means Monte-Carlo targets
    target_update: int = 100
    # network
    hidden: int = 64
    latent: int = 32
    head_hidden: int = 32
    embed: int = 8
    action_embed: int = 8
    log_every: int = 10

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}; expected one of {KINDS}")
        if self.critic not in ("v_mu", "v_pi"):
            raise ValueError("critic must be v_mu or v_pi")

    @property
    def net(self) -> NetConfig:
        return NetConfig(hidden=self.hidden, latent=self.latent, head_hidden=self.head_hidden,
                         embed=self.embed, action_embed=self.action_embed)

    @property
    def frames_per_step(self) -> int:
        return self.M * self.K

    @property
    def total_steps(self) -> int:
        return max(1, self.n_frames // self.frames_per_step)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


def default_config(kind: str, **overrides) -> TrainConfig:
    base = dict(kind=kind)
    if kind == "ft-bc":
        # 50x smaller lr0, a tenth of the frames, ramp-in over a tenth of those
        base.update(lr0=1e-5, n_frames=1_000_000, n_ramp=100_000.0,
                    min_skill=5200.0, outcome_filter="win_only")
    elif kind == "bc-value":
        base.update(value_weight=10.0, weight_decay=0.0)
    elif kind in ("oac", "e-oac"):
        base.update(M=64, K=8, lr0=5e-4, clip="after:10", weight_decay=0.0)
    elif kind == "mzs":
        base.update(M=64, K=5, lr0=1e-3, optimizer="adamw", weight_decay=1e-4, value_weight=1.0,
                    clip="before:10")
    base.update(overrides)
    return TrainConfig(**base)


def training_view(dataset: ReplayDataset, config: TrainConfig) -> ReplayDataset:
    view = dataset.filter(config.min_skill, config.outcome_filter)
    if len(view) == 0:
        raise ValueError(f"no episodes left after filtering (skill > {config.min_skill}, "
                         f"{config.outcome_filter})")
    return view


def _split(arrays: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}


class Learner:
    """Shared loop: schedule, optimizer, logging, checkpoint and exact resume."""

    kind = "bc"

    def __init__(self, dataset: ReplayDataset, config: TrainConfig, init: NetworkParams | None = None):
        self.config = config
        self.dataset = dataset
        self.data = training_view(dataset, config)
        self.params = init.copy() if init is not None else init_params(config.net, config.seed)
        self.opt = OptimizerState.create(self.params, config.optimizer,
                                         weight_decay=config.weight_decay if config.optimizer == "adamw" else 0.0)
        self.clip = Clip.parse(config.clip)
        self.rng = np.random.default_rng([config.seed, KINDS.index(self.kind)])
        self.step_index = 0
        self.history: list[dict] = []
        self.inference_skill = self.data.max_skill / SKILL_MAX

    # ---- subclasses implement these

    def compute_update(self) -> tuple[dict, dict]:
        """Return (gradients, log fields) for one learner step."""
        raise NotImplementedError

    def trainable(self):
        return None

    def extra_state(self) -> tuple[dict, dict]:
        return {}, {}

    def load_extra_state(self, meta: dict, arrays: dict) -> None:
        pass

    def after_update(self) -> None:
        pass

    # ---- loop

    def lr(self, i: int) -> float:
        c = self.config
        return cosine_lr(i * c.frames_per_step, c.lr0, c.n_frames, c.n_ramp)

    def step(self) -> dict:
        i = self.step_index
        grads, fields = self.compute_update()
        lr = self.lr(i)
        self.params = optimizer_step(self.opt, self.params, grads, lr, self.clip, self.trainable())
        if not self.params.all_finite():
            raise FloatingPointError(f"non-finite parameters after step {i}")
        self.step_index += 1
        self.after_update()
        row = {"step": i, "frames": (i + 1) * self.config.frames_per_step, "lr": lr}
        row.update(fields)
        if i % self.config.log_every == 0 or self.step_index == self.config.total_steps:
            self.history.append(row)
        return row

    @property
    def done(self) -> bool:
        return self.step_index >= self.config.total_steps

    def run(self, until: int | None = None, checkpoint_path=None, checkpoint_every: int = 0,
            callback=None, callback_every: int = 0) -> NetworkParams:
        """Train up to step ``until`` (default: the frame budget).

        On a numeric fault the last good checkpoint (if any) is kept on disk
        and the exception propagates.
        """
        stop = self.config.total_steps if until is None else min(until, self.config.total_steps)
        while self.step_index < stop:
            self.step()
            if checkpoint_path and checkpoint_every and self.step_index % checkpoint_every == 0:
                self.save(checkpoint_path)
            if callback and callback_every and self.step_index % callback_every == 0:
                callback(self)
        if checkpoint_path:
            self.save(checkpoint_path)
        return self.params

    # ---- persistence

    def checkpoint_bytes(self) -> bytes:
        extra_meta, extra_arrays = self.extra_state()
        meta = {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "step": self.step_index,
            "optimizer": self.opt.meta(),
            "rng": self.rng.bit_generator.state,
            "inference_skill": self.inference_skill,
            "dataset_digest": self.dataset.digest(),
            "done": self.done,
            "extra": extra_meta,
        }
        arrays = {f"params/{k}": v for k, v in self.params.arrays.items()}
        arrays.update({f"opt/{k}": v for k, v in self.opt.arrays().items()})
        arrays.update(extra_arrays)
        return bundle.dumps(meta, arrays)

    def save(self, path) -> None:
        Path(path).write_bytes(self.checkpoint_bytes())

    def _restore(self, meta: dict, arrays: dict) -> None:
        self.params = NetworkParams(self.config.net, _split(arrays, "params/"))
        self.opt = OptimizerState.restore(meta["optimizer"], _split(arrays, "opt/"))
        self.rng.bit_generator.state = meta["rng"]
        self.step_index = meta["step"]
        self.load_extra_state(meta["extra"], arrays)

    def log_csv(self) -> str:
        if not self.history:
            return ""
        keys = list(self.history[0])
        for row in self.history[1:]:
            keys += [k for k in row if k not in keys]
        buf = io.StringIO()
        w = csv.DictWriter(buf, keys, lineterminator="\n")
        w.writeheader()
        for row in self.history:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()


@dataclasses.dataclass
class Checkpoint:
    kind: str
    config: TrainConfig
    params: NetworkParams
    meta: dict
    arrays: dict
    code_version: str

    @property
    def behavior(self) -> NetworkParams | None:
        b = _split(self.arrays, "behavior/")
        return NetworkParams(self.config.net, b) if b else None

    @property
    def inference_skill(self) -> float:
        return self.meta["inference_skill"]


def read_checkpoint(path_or_bytes) -> Checkpoint:
    data = path_or_bytes if isinstance(path_or_bytes, bytes) else Path(path_or_bytes).read_bytes()
    meta, arrays, version = bundle.loads(data)
    if "kind" not in meta or "config" not in meta:
        raise bundle.BundleError("not a training checkpoint")
    config = TrainConfig.from_dict(meta["config"])
    return Checkpoint(meta["kind"], config, NetworkParams(config.net, _split(arrays, "params/")),
                      meta, arrays, version)
