"""N-step emphatic traces, streamed across consecutive minibatches of each lane.

    F[t] = prod_{p=1..N} (gamma[t-p+1] * rho[t-p]) * F[t-N] + 1

``gamma[t]`` discounts the transition into step t (zero at an episode
start).  Each lane keeps the last N values of F, rho and gamma so the
recursion continues seamlessly into the next window.  The default history
has rho = 0, so the first N traces of a fresh lane are exactly 1.
"""

from __future__ import annotations

import dataclasses

import numpy as np


class LaneDiscontinuity(RuntimeError):
    """A lane's window does not continue where the previous one ended."""


@dataclasses.dataclass
class EmphaticState:
    n: int
    F: np.ndarray      # (M, N) oldest first
    rho: np.ndarray    # (M, N)
    gamma: np.ndarray  # (M, N)
    position: np.ndarray  # (M,) stream position expected next

    @classmethod
    def initial(cls, m: int, n: int, f_init: float = 1.0, rho_init: float = 0.0,
                gamma_init: float = 1.0) -> "EmphaticState":
        if n < 1:
            raise ValueError("N must be >= 1")
        full = lambda v: np.full((m, n), float(v))
        return cls(n, full(f_init), full(rho_init), full(gamma_init), np.zeros(m, dtype=np.int64))

    def arrays(self) -> dict[str, np.ndarray]:
        return {"emphatic/F": self.F, "emphatic/rho": self.rho, "emphatic/gamma": self.gamma,
                "emphatic/position": self.position}

    @classmethod
    def restore(cls, n: int, arrays: dict[str, np.ndarray]) -> "EmphaticState":
        return cls(n, arrays["emphatic/F"].copy(), arrays["emphatic/rho"].copy(),
                   arrays["emphatic/gamma"].copy(), arrays["emphatic/position"].copy())


def emphatic_traces(rho, gamma, state: EmphaticState, positions=None):
    """Traces for the next window of every lane.

    ``rho`` and ``gamma`` have shape (M, K) (training steps only).
    ``positions`` (M,), when given, must equal each lane's expected stream
    position.  Returns ``(F, new_state)``.
    """
    rho = np.atleast_2d(np.asarray(rho, dtype=np.float64))
    gamma = np.atleast_2d(np.asarray(gamma, dtype=np.float64))
    M, K = rho.shape
    N = state.n
    if positions is not None and not np.array_equal(np.asarray(positions), state.position):
        raise LaneDiscontinuity(f"expected lane positions {state.position.tolist()}, "
                                f"got {np.asarray(positions).tolist()}")
    F = np.concatenate([state.F, np.zeros((M, K))], axis=1)
    R = np.concatenate([state.rho, rho], axis=1)
    G = np.concatenate([state.gamma, gamma], axis=1)
    for u in range(N, N + K):
        prod = np.ones(M)
        for p in range(1, N + 1):
            prod = prod * G[:, u - p + 1] * R[:, u - p]
        F[:, u] = prod * F[:, u - N] + 1.0
    new = EmphaticState(N, F[:, -N:].copy(), R[:, -N:].copy(), G[:, -N:].copy(),
                        state.position + K)
    return F[:, N:], new
