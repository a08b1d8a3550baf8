"""Policy/value network with autoregressive action heads and a latent model.

Layout::

    x --trunk(2 x tanh)--> latent h --+-- function head ----------> f logits
                                      +-- delay head  [h, emb(f)] --> d logits
                                      +-- target head [h, emb(f), emb(d)] --> t logits
                                      +-- value head ----------------> V
    h, (f, d) --dynamics--> h'

The latent ``h`` doubles as the MuZero representation: the encoder is the
trunk, the function/delay heads are the policy decoder and the value head
is the value decoder.  At depth 0 the model is therefore exactly the
behavior-cloning network.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from unplugged import autodiff as ad
from unplugged import bundle
from unplugged.env import N_DELAYS, N_FUNCTIONS, N_TARGETS
from unplugged.replay import OBS_DIM


class NumericFault(FloatingPointError):
    """A non-finite value appeared in a forward or backward pass."""


@dataclasses.dataclass(frozen=True)
class NetConfig:
    obs_dim: int = OBS_DIM
    hidden: int = 64
    latent: int = 32
    head_hidden: int = 32
    embed: int = 8
    action_embed: int = 8

    def shapes(self) -> dict[str, tuple[int, ...]]:
        H, L, HH, E, AE = self.hidden, self.latent, self.head_hidden, self.embed, self.action_embed
        s = {
            "trunk.w1": (self.obs_dim, H), "trunk.b1": (H,),
            "trunk.w2": (H, H), "trunk.b2": (H,),
            "trunk.w3": (H, L), "trunk.b3": (L,),
            "embed.function": (N_FUNCTIONS, E),
            "embed.delay": (N_DELAYS, E),
        }
        for name, fan_in, out in (("function", L, N_FUNCTIONS), ("delay", L + E, N_DELAYS),
                                  ("target", L + 2 * E, N_TARGETS), ("value", L, 1)):
            s[f"{name}.w1"] = (fan_in, HH)
            s[f"{name}.b1"] = (HH,)
            s[f"{name}.w2"] = (HH, out)
            s[f"{name}.b2"] = (out,)
        s["dynamics.action"] = (N_FUNCTIONS + N_DELAYS, AE)
        s["dynamics.w1"] = (L + AE, H)
        s["dynamics.b1"] = (H,)
        s["dynamics.w2"] = (H, L)
        s["dynamics.b2"] = (L,)
        return s


HEAD_GROUPS = {
    "trunk": ("trunk.",),
    "function": ("function.",),
    "delay": ("delay.", "embed.function"),
    "target": ("target.", "embed.delay"),
    "value": ("value.",),
    "dynamics": ("dynamics.",),
}


def names_in(groups, config: NetConfig | None = None) -> list[str]:
    config = config or NetConfig()
    prefixes = tuple(p for g in groups for p in HEAD_GROUPS[g])
    return [n for n in config.shapes() if n.startswith(prefixes)]


@dataclasses.dataclass
class NetworkParams:
    config: NetConfig
    arrays: dict[str, np.ndarray]

    def __getitem__(self, name):
        return self.arrays[name]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays.values())

    def equals(self, other: "NetworkParams") -> bool:
        return (self.config == other.config and self.arrays.keys() == other.arrays.keys()
                and all(self.arrays[k].tobytes() == other.arrays[k].tobytes() for k in self.arrays))

    def to_bytes(self, meta: dict | None = None) -> bytes:
        m = {"kind": "network_params", "net_config": dataclasses.asdict(self.config)}
        m.update(meta or {})
        return bundle.dumps(m, self.arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "NetworkParams":
        meta, arrays, _ = bundle.loads(data)
        return cls(NetConfig(**meta["net_config"]), arrays)


def init_params(config: NetConfig | None = None, seed: int = 0) -> NetworkParams:
    """Uniform fan-in initialization, zero biases."""
    config = config or NetConfig()
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in config.shapes().items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        elif name.startswith("embed.") or name == "dynamics.action":
            arrays[name] = rng.uniform(-1.0, 1.0, shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            arrays[name] = rng.uniform(-bound, bound, shape)
    return NetworkParams(config, arrays)


# ------------------------------------------------------------------ blocks
# All blocks take a mapping name -> Tensor so the same code serves training
# (parameters on the tape) and inference (constants).

def _mlp_head(P, name, x):
    u = ad.tanh(ad.add(ad.matmul(x, P[f"{name}.w1"]), P[f"{name}.b1"]))
    return ad.add(ad.matmul(u, P[f"{name}.w2"]), P[f"{name}.b2"])


def encode(P, x):
    a = ad.tanh(ad.add(ad.matmul(x, P["trunk.w1"]), P["trunk.b1"]))
    a = ad.tanh(ad.add(ad.matmul(a, P["trunk.w2"]), P["trunk.b2"]))
    return ad.tanh(ad.add(ad.matmul(a, P["trunk.w3"]), P["trunk.b3"]))


def function_logits(P, h):
    return _mlp_head(P, "function", h)


def delay_logits(P, h, f):
    return _mlp_head(P, "delay", ad.concat([h, ad.take_rows(P["embed.function"], f)]))


def target_logits(P, h, f, d):
    emb = [ad.take_rows(P["embed.function"], f), ad.take_rows(P["embed.delay"], d)]
    return _mlp_head(P, "target", ad.concat([h] + emb))


def value(P, h):
    return ad.squeeze_last(_mlp_head(P, "value", h))


def dynamics(P, h, f, d):
    onehot = np.zeros((len(f), N_FUNCTIONS + N_DELAYS))
    onehot[np.arange(len(f)), f] = 1.0
    onehot[np.arange(len(f)), N_FUNCTIONS + np.asarray(d)] = 1.0
    a = ad.matmul(onehot, P["dynamics.action"])
    u = ad.tanh(ad.add(ad.matmul(ad.concat([h, a]), P["dynamics.w1"]), P["dynamics.b1"]))
    return ad.tanh(ad.add(ad.matmul(u, P["dynamics.w2"]), P["dynamics.b2"]))


def constants(params: NetworkParams) -> dict:
    return {k: ad.const(v) for k, v in params.arrays.items()}


def _check_finite(what: str, arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NumericFault(f"{bad} non-finite entries in {what} (shape {np.shape(arr)})")


# ---------------------------------------------------------------- sampling

def tempered_probs(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def sample_from_probs(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, one uniform per row."""
    cdf = np.cumsum(probs, axis=-1)
    idx = (uniforms[..., None] * cdf[..., -1:] >= cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_with_temperature(logits, temperature: float, rng: np.random.Generator):
    """Sample index/indices from softmax(logits / temperature)."""
    probs = tempered_probs(logits, temperature)
    u = rng.random(probs.shape[:-1])
    out = sample_from_probs(probs, np.asarray(u))
    return int(out) if np.ndim(out) == 0 else out


def _uniforms(rng, n: int) -> np.ndarray:
    if isinstance(rng, np.random.Generator):
        return rng.random(n)
    return np.array([r.random() for r in rng])


@dataclasses.dataclass
class PolicyOutput:
    function_logits: np.ndarray
    delay_logits: np.ndarray
    target_logits: np.ndarray
    value: np.ndarray
    function: np.ndarray
    delay: np.ndarray
    target: np.ndarray


def forward_policy(params: NetworkParams, x: np.ndarray, teacher=None, rng=None,
                   temperature: float = 1.0, target_params: NetworkParams | None = None) -> PolicyOutput:
    """Per-argument logits under teacher forcing, or autoregressive sampling.

    ``teacher`` is a tuple of (function, delay, target) index arrays.  ``rng``
    is a Generator or a list with one Generator per row.  When
    ``target_params`` is given the target argument comes from that network.
    """
    if (teacher is None) == (rng is None):
        raise ValueError("provide exactly one of teacher or rng")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = len(x)
    P = constants(params)
    h = encode(P, x)
    lf = function_logits(P, h).value
    _check_finite("function logits", lf)
    if teacher is not None:
        f, d, t = (np.asarray(a, dtype=np.int64).reshape(n) for a in teacher)
    else:
        f = sample_from_probs(tempered_probs(lf, temperature), _uniforms(rng, n))
    ld = delay_logits(P, h, f).value
    _check_finite("delay logits", ld)
    if teacher is None:
        d = sample_from_probs(tempered_probs(ld, temperature), _uniforms(rng, n))
    if target_params is not None:
        Pt = constants(target_params)
        lt = target_logits(Pt, encode(Pt, x), f, d).value
    else:
        lt = target_logits(P, h, f, d).value
    _check_finite("target logits", lt)
    if teacher is None:
        t = sample_from_probs(tempered_probs(lt, temperature), _uniforms(rng, n))
    v = value(P, h).value
    return PolicyOutput(lf, ld, lt, v, f, d, t)


# ------------------------------------------------------------------ losses

@dataclasses.dataclass(frozen=True)
class LossSpec:
    """Weights of the composite loss terms."""
    function: float = 1.0
    delay: float = 1.0
    target: float = 1.0
    value: float = 0.0
    weight_decay: float = 0.0


@dataclasses.dataclass
class LossBatch:
    x: np.ndarray
    function: np.ndarray
    delay: np.ndarray
    target: np.ndarray
    value_target: np.ndarray | None = None
    weight: np.ndarray | None = None        # per-sample weight of the policy terms
    value_weight: np.ndarray | None = None  # per-sample weight of the value term

    def weights(self):
        n = len(self.x)
        w = np.ones(n) if self.weight is None else np.asarray(self.weight, dtype=np.float64)
        wv = w if self.value_weight is None else np.asarray(self.value_weight, dtype=np.float64)
        return w, wv


def root_terms(P, spec: LossSpec, batch: LossBatch, h=None) -> list:
    """Policy, value and weight-decay terms of a single-step (root) loss."""
    w, wv = batch.weights()
    if h is None:
        h = encode(P, batch.x)
    terms = []
    if spec.function:
        terms.append(ad.weighted_cross_entropy(function_logits(P, h), batch.function,
                                               spec.function * w))
    if spec.delay:
        terms.append(ad.weighted_cross_entropy(delay_logits(P, h, batch.function), batch.delay,
                                               spec.delay * w))
    if spec.target:
        terms.append(ad.weighted_cross_entropy(target_logits(P, h, batch.function, batch.delay),
                                               batch.target, spec.target * w))
    if spec.value:
        terms.append(ad.weighted_squared_error(value(P, h), batch.value_target, spec.value * wv))
    return terms


def decay_term(P, spec: LossSpec, names=None):
    names = names or list(P)
    return ad.scale(ad.sum_of_squares([P[n] for n in names]), spec.weight_decay)


def _backprop(params: NetworkParams, build, trainable=None):
    names = list(params.arrays) if trainable is None else list(trainable)
    P = constants(params)
    for n in names:
        P[n] = ad.param(params.arrays[n])
    loss = build(P)
    _check_finite("loss", loss.value)
    loss.backward()
    grads = {}
    for n in params.arrays:
        g = P[n].grad if n in names else None
        grads[n] = np.zeros_like(params.arrays[n]) if g is None else g
        _check_finite(f"gradient of {n}", grads[n])
    return float(loss.value), grads


def loss_and_grad(params: NetworkParams, spec: LossSpec, batch: LossBatch, trainable=None):
    """Composite BC / MSE / weight-decay loss and its exact gradient."""
    if len(batch.x) == 0:
        raise ValueError("empty batch")

    def build(P):
        terms = root_terms(P, spec, batch)
        if spec.weight_decay:
            terms.append(decay_term(P, spec))
        return ad.total(terms)

    return _backprop(params, build, trainable)


# ---------------------------------------------------------- latent unroll

@dataclasses.dataclass
class UnrollBatch:
    """Rollouts of K dataset steps starting at ``x0``.

    ``function``/``delay``/``value_target``/``mask`` have shape (B, K);
    ``target`` (B,) is the root target argument.
    """
    x0: np.ndarray
    function: np.ndarray
    delay: np.ndarray
    target: np.ndarray
    value_target: np.ndarray
    mask: np.ndarray
    weight: float = 1.0


def latent_unroll(params: NetworkParams, x0: np.ndarray, functions: np.ndarray, delays: np.ndarray):
    """Teacher-forced unroll: lists of function logits, delay logits, values for k = 0..K-1."""
    P = constants(params)
    h = encode(P, np.atleast_2d(x0))
    functions = np.atleast_2d(functions)
    delays = np.atleast_2d(delays)
    out_f, out_d, out_v = [], [], []
    K = functions.shape[1]
    for k in range(K):
        _check_finite(f"latent at depth {k}", h.value)
        out_f.append(function_logits(P, h).value)
        out_d.append(delay_logits(P, h, functions[:, k]).value)
        out_v.append(value(P, h).value)
        if k + 1 < K:
            h = dynamics(P, h, functions[:, k], delays[:, k])
    return out_f, out_d, out_v


def unroll_terms(P, spec: LossSpec, batch: UnrollBatch) -> list:
    B, K = batch.function.shape
    m = batch.mask.astype(np.float64) * batch.weight
    root = LossBatch(batch.x0, batch.function[:, 0], batch.delay[:, 0], batch.target,
                     batch.value_target[:, 0], m[:, 0])
    h = encode(P, batch.x0)
    terms = root_terms(P, spec, root, h=h)
    for k in range(1, K):
        h = dynamics(P, h, batch.function[:, k - 1], batch.delay[:, k - 1])
        if spec.function:
            terms.append(ad.weighted_cross_entropy(function_logits(P, h), batch.function[:, k],
                                                   spec.function * m[:, k]))
        if spec.delay:
            terms.append(ad.weighted_cross_entropy(delay_logits(P, h, batch.function[:, k]),
                                                   batch.delay[:, k], spec.delay * m[:, k]))
        if spec.value:
            terms.append(ad.weighted_squared_error(value(P, h), batch.value_target[:, k],
                                                   spec.value * m[:, k]))
    return terms


def unroll_loss_and_grad(params: NetworkParams, spec: LossSpec, batch: UnrollBatch, trainable=None):
    """Unrolled latent-model loss: BC at every depth (target only at the root) plus value MSE."""

    def build(P):
        terms = unroll_terms(P, spec, batch)
        if spec.weight_decay:
            terms.append(decay_term(P, spec))
        return ad.total(terms)

    return _backprop(params, build, trainable)


def save_params(path, params: NetworkParams, meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(params.to_bytes(meta))


def load_params(path) -> NetworkParams:
    with open(path, "rb") as fh:
        return NetworkParams.from_bytes(fh.read())
