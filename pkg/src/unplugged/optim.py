"""Adam / AdamW with global-norm clipping before or after the Adam transform, and the cosine schedule."""

from __future__ import annotations

import dataclasses
import math

import numpy as np


@dataclasses.dataclass(frozen=True)
class Clip:
    mode: str = "none"  # none | before | after
    norm: float = 10.0

    def __post_init__(self):
        if self.mode not in ("none", "before", "after"):
            raise ValueError(f"unknown clip mode {self.mode!r}")

    @classmethod
    def parse(cls, text: str) -> "Clip":
        """``"none"``, ``"before:10"`` or ``"after:10"``."""
        mode, _, norm = text.partition(":")
        return cls(mode, float(norm) if norm else 10.0)

    def __str__(self):
        return "none" if self.mode == "none" else f"{self.mode}:{self.norm:g}"


@dataclasses.dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    variant: str = "adam"  # adam | adamw
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def create(cls, params, variant: str = "adam", weight_decay: float = 0.0, **kw) -> "OptimizerState":
        if variant not in ("adam", "adamw"):
            raise ValueError(f"unknown optimizer variant {variant!r}")
        arrays = params.arrays if hasattr(params, "arrays") else params
        zeros = {k: np.zeros_like(v) for k, v in arrays.items()}
        return cls({k: z.copy() for k, z in zeros.items()}, zeros, 0, variant, weight_decay=weight_decay, **kw)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"m/{k}": v for k, v in self.m.items()}
        out.update({f"v/{k}": v for k, v in self.v.items()})
        return out

    def meta(self) -> dict:
        return {"step": self.step, "variant": self.variant, "b1": self.b1, "b2": self.b2,
                "eps": self.eps, "weight_decay": self.weight_decay}

    @classmethod
    def restore(cls, meta: dict, arrays: dict[str, np.ndarray]) -> "OptimizerState":
        m = {k[2:]: v for k, v in arrays.items() if k.startswith("m/")}
        v = {k[2:]: a for k, a in arrays.items() if k.startswith("v/")}
        return cls(m, v, **meta)


def global_norm(arrays) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in arrays))


def clip_by_global_norm(tree: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    norm = global_norm(tree.values())
    if norm <= max_norm or norm == 0.0:
        return tree
    s = max_norm / norm
    return {k: v * s for k, v in tree.items()}


def optimizer_step(state: OptimizerState, params, grads: dict[str, np.ndarray], lr: float,
                   clip: Clip = Clip(), trainable=None):
    """One Adam(W) update; returns new params (``state`` is advanced in place).

    Parameters outside ``trainable`` are returned untouched, bit for bit.
    """
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    arrays = params.arrays
    names = list(arrays) if trainable is None else [n for n in arrays if n in set(trainable)]
    for n in names:
        if grads[n].shape != arrays[n].shape:
            raise ValueError(f"gradient shape {grads[n].shape} != param shape {arrays[n].shape} for {n}")
    g = {n: grads[n] for n in names}
    if clip.mode == "before":
        g = clip_by_global_norm(g, clip.norm)
    state.step += 1
    t = state.step
    c1 = 1.0 - state.b1 ** t
    c2 = 1.0 - state.b2 ** t
    updates = {}
    for n in names:
        state.m[n] = state.b1 * state.m[n] + (1.0 - state.b1) * g[n]
        state.v[n] = state.b2 * state.v[n] + (1.0 - state.b2) * g[n] * g[n]
        updates[n] = (state.m[n] / c1) / (np.sqrt(state.v[n] / c2) + state.eps)
    if clip.mode == "after":
        updates = clip_by_global_norm(updates, clip.norm)
    new = dict(arrays)
    for n in names:
        u = updates[n]
        if state.variant == "adamw" and state.weight_decay:
            u = u + state.weight_decay * arrays[n]
        new[n] = arrays[n] - lr * u
    return type(params)(params.config, new)


def cosine_lr(k: float, lr0: float, k_max: float, n_ramp: float = 0.0) -> float:
    """min(1, k/n_ramp) * lr0/2 * (cos(pi k / k_max) + 1); no ramp when n_ramp == 0."""
    ramp = 1.0 if n_ramp <= 0 else min(1.0, k / n_ramp)
    return ramp * (lr0 / 2.0) * (math.cos(math.pi * k / k_max) + 1.0)
