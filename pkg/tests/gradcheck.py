"""Central-difference gradient checks shared by the numerics and acceptance tests."""

import numpy as np

from unplugged.network import NetConfig, NetworkParams, init_params

SMALL = NetConfig(hidden=8, latent=8, head_hidden=8, embed=8, action_embed=8)


def random_net(seed: int, config: NetConfig = SMALL) -> NetworkParams:
    p = init_params(config, seed)
    rng = np.random.default_rng(seed + 1000)
    # non-zero biases so every path is exercised
    return NetworkParams(config, {k: v + 0.1 * rng.standard_normal(v.shape) for k, v in p.arrays.items()})


def max_relative_error(loss_fn, params: NetworkParams, grads: dict, h: float = 1e-5,
                       per_tensor: int = 6, seed: int = 0) -> float:
    """Largest |analytic - numeric| / (|analytic| + |numeric|) over sampled coordinates."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, arr in params.arrays.items():
        flat = arr.ravel()
        picks = rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        for i in picks:
            plus, minus = params.copy(), params.copy()
            plus.arrays[name].ravel()[i] += h
            minus.arrays[name].ravel()[i] -= h
            num = (loss_fn(plus) - loss_fn(minus)) / (2 * h)
            ana = grads[name].ravel()[i]
            if abs(ana) + abs(num) < 1e-10:
                continue  # both vanish: nothing to compare
            worst = max(worst, abs(ana - num) / (abs(ana) + abs(num)))
    return worst


def random_loss_batch(rng, n: int = 7, obs_dim: int = 13):
    from unplugged.network import LossBatch
    return LossBatch(x=rng.standard_normal((n, obs_dim)), function=rng.integers(5, size=n),
                     delay=rng.integers(4, size=n), target=rng.integers(2, size=n),
                     value_target=rng.choice([-1.0, 0.0, 1.0], size=n), weight=rng.random(n))


def random_unroll_batch(rng, n: int = 5, K: int = 3, obs_dim: int = 13):
    from unplugged.network import UnrollBatch
    return UnrollBatch(x0=rng.standard_normal((n, obs_dim)), function=rng.integers(5, size=(n, K)),
                       delay=rng.integers(4, size=(n, K)), target=rng.integers(2, size=n),
                       value_target=rng.uniform(-1, 1, size=(n, K)), mask=rng.random((n, K)) < 0.8,
                       weight=0.3)
