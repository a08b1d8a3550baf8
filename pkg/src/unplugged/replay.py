"""Offline replay dataset: generation, binary storage, filtering and rollout sampling."""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from unplugged import __version__
from unplugged import env
from unplugged.env import DELAYS, Function, Observation, StructuredAction, Target

MAGIC = b"DUELREPL"
FORMAT_VERSION = 1
SKILL_MAX = 7000.0
HEADER = struct.Struct("<8sHQ32s")
RECORD_HEAD = struct.Struct("<bdBQBI")

STEP_DTYPE = np.dtype([
    ("own_economy", "<i4"),
    ("own_army", "<i4"),
    ("game_loop_frac", "<f8"),
    ("prev_delay", "<i4"),
    ("opp_economy", "<i4"),
    ("opp_army", "<i4"),
    ("opp_visible", "u1"),
    ("skill_conditioning", "<f8"),
    ("last_own_function", "u1"),
    ("function", "u1"),
    ("delay", "u1"),
    ("target", "u1"),
    ("game_loop_delta", "<i4"),
])

OBS_DIM = 8 + env.N_FUNCTIONS
_DELAY_INDEX = np.zeros(max(DELAYS) + 1, dtype=np.int64)
_DELAY_INDEX[list(DELAYS)] = np.arange(len(DELAYS))


class DatasetFormatError(ValueError):
    pass


@dataclasses.dataclass(eq=False)
class Episode:
    """One player's side of a game; ``steps`` is a STEP_DTYPE structured array."""
    steps: np.ndarray
    outcome: int
    skill: float
    map_id: int
    game_seed: int
    player_id: int

    def __len__(self):
        return len(self.steps)

    def __eq__(self, other):
        if not isinstance(other, Episode):
            return NotImplemented
        return (self.outcome == other.outcome and self.skill == other.skill
                and self.map_id == other.map_id and self.game_seed == other.game_seed
                and self.player_id == other.player_id
                and self.steps.tobytes() == other.steps.tobytes())

    def observation(self, t: int) -> Observation:
        s = self.steps[t]
        return Observation(int(s["own_economy"]), int(s["own_army"]), float(s["game_loop_frac"]),
                           int(s["prev_delay"]), int(s["opp_economy"]), int(s["opp_army"]),
                           bool(s["opp_visible"]), float(s["skill_conditioning"]),
                           Function(int(s["last_own_function"])))

    def action(self, t: int) -> StructuredAction:
        s = self.steps[t]
        return StructuredAction(Function(int(s["function"])), int(s["delay"]), Target(int(s["target"])))

    @property
    def rewards(self) -> np.ndarray:
        r = np.zeros(len(self.steps))
        r[-1] = self.outcome
        return r


def encode_steps(steps: np.ndarray) -> np.ndarray:
    """Feature matrix (N, OBS_DIM) for observation fields of a step array."""
    n = len(steps)
    x = np.zeros((n, OBS_DIM))
    vis = steps["opp_visible"].astype(np.float64)
    x[:, 0] = steps["own_economy"] / 8.0
    x[:, 1] = steps["own_army"] / 4.0
    x[:, 2] = steps["game_loop_frac"]
    x[:, 3] = steps["prev_delay"] / 8.0
    x[:, 4] = vis
    x[:, 5] = vis * steps["opp_economy"] / 8.0
    x[:, 6] = vis * steps["opp_army"] / 4.0
    x[:, 7] = steps["skill_conditioning"]
    x[np.arange(n), 8 + steps["last_own_function"].astype(np.int64)] = 1.0
    return x


def observations_to_steps(observations) -> np.ndarray:
    steps = np.zeros(len(observations), dtype=STEP_DTYPE)
    for i, o in enumerate(observations):
        steps[i]["own_economy"] = o.own_economy
        steps[i]["own_army"] = o.own_army
        steps[i]["game_loop_frac"] = o.game_loop_frac
        steps[i]["prev_delay"] = o.prev_delay
        steps[i]["opp_economy"] = o.opp_economy
        steps[i]["opp_army"] = o.opp_army
        steps[i]["opp_visible"] = o.opp_visible
        steps[i]["skill_conditioning"] = o.skill_conditioning
        steps[i]["last_own_function"] = int(o.last_own_function)
    return steps


def encode_observations(observations) -> np.ndarray:
    return encode_steps(observations_to_steps(observations))


# ---------------------------------------------------------------- generation

@dataclasses.dataclass(frozen=True)
class SkillSampler:
    """Draws bot levels for a game.

    Side 0 gets a level from ``weights``; side 1 gets a level within
    ``max_gap`` of it (renormalized weights), mimicking matchmaking.
    ``fixed`` pins the pair instead.
    """
    weights: tuple[float, ...] = (1, 1, 1, 1, 1, 1)
    max_gap: int = 1
    fixed: tuple[int, int] | None = None

    def draw(self, rng: np.random.Generator) -> tuple[int, int]:
        if self.fixed is not None:
            return self.fixed
        w = np.asarray(self.weights, dtype=np.float64)
        a = int(rng.choice(len(w), p=w / w.sum()))
        levels = np.arange(len(w))
        w2 = np.where(np.abs(levels - a) <= self.max_gap, w, 0.0)
        b = int(rng.choice(len(w), p=w2 / w2.sum()))
        return a, b

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "max_gap": self.max_gap,
                "fixed": list(self.fixed) if self.fixed else None}

    @classmethod
    def parse(cls, text: str) -> "SkillSampler":
        """``"uniform"``, ``"matched:<gap>"``, ``"fixed:<a>,<b>"`` or ``"weights:w0,...,w5[;gap]"``."""
        kind, _, arg = text.partition(":")
        if kind == "uniform":
            return cls(max_gap=env.MAX_LEVEL)
        if kind == "matched":
            return cls(max_gap=int(arg or 1))
        if kind == "fixed":
            a, b = (int(v) for v in arg.split(","))
            return cls(fixed=(a, b))
        if kind == "weights":
            w, _, gap = arg.partition(";")
            return cls(weights=tuple(float(v) for v in w.split(",")), max_gap=int(gap or 1))
        raise ValueError(f"unknown skill sampler spec {text!r}")


def skill_label(level: int, rng: np.random.Generator) -> float:
    return 1000.0 * level + 1000.0 + float(rng.uniform(-100.0, 100.0))


def _play_logged_game(seed: int, game_index: int, sampler: SkillSampler) -> list[Episode]:
    rng = np.random.default_rng([seed, game_index])
    levels = sampler.draw(rng)
    map_id = int(rng.integers(env.N_MAPS))
    game_seed = int(rng.integers(2**63))
    skills = [skill_label(lv, rng) for lv in levels]
    bot_rngs = [np.random.default_rng([game_seed, pid]) for pid in (0, 1)]
    policies = [lambda o, pid=pid: env.scripted_policy(levels[pid], o, bot_rngs[pid]) for pid in (0, 1)]
    log = env.play_game(game_seed, map_id, policies)
    episodes = []
    for pid in (0, 1):
        obs = [o.with_skill(skills[pid] / SKILL_MAX) for o in log.observations[pid]]
        steps = observations_to_steps(obs)
        acts = log.actions[pid]
        steps["function"] = [int(a.function) for a in acts]
        steps["delay"] = [a.delay for a in acts]
        steps["target"] = [int(a.target) for a in acts]
        steps["game_loop_delta"][1:] = [a.delay for a in acts[:-1]]
        episodes.append(Episode(steps, int(log.outcome[pid]), skills[pid], map_id, game_seed, pid))
    return episodes


def generate_dataset(n_games: int, sampler: SkillSampler | None = None, seed: int = 0,
                     workers: int = 1) -> "ReplayDataset":
    """Play ``n_games`` scripted games and log both sides of each."""
    if n_games < 1:
        raise ValueError("n_games must be >= 1")
    sampler = sampler or SkillSampler()
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_play_logged_game, [seed] * n_games, range(n_games),
                                   [sampler] * n_games, chunksize=64))
    else:
        chunks = [_play_logged_game(seed, g, sampler) for g in range(n_games)]
    episodes = [ep for chunk in chunks for ep in chunk]
    config = {"n_games": n_games, "seed": seed, "sampler": sampler.to_dict()}
    return ReplayDataset(episodes, config)


# ----------------------------------------------------------------- dataset

class ReplayDataset:
    """Episodes plus a columnar cache used by the samplers."""

    def __init__(self, episodes: list[Episode], config: dict | None = None):
        self.episodes = list(episodes)
        self.config = dict(config or {})
        self._columns = None

    def __len__(self):
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)

    @property
    def columns(self) -> "Columns":
        if self._columns is None:
            self._columns = Columns.build(self.episodes)
        return self._columns

    def filter(self, min_skill: float = 0.0, outcome_filter: str = "all") -> "ReplayDataset":
        """Episodes with skill > min_skill whose outcome passes ``outcome_filter``."""
        keep = {"all": {-1, 0, 1}, "win_only": {1}, "win_and_loss": {-1, 1}}
        if outcome_filter not in keep:
            raise ValueError(f"outcome_filter must be one of {sorted(keep)}")
        allowed = keep[outcome_filter]
        chosen = [ep for ep in self.episodes if ep.skill > min_skill and ep.outcome in allowed]
        cfg = dict(self.config, filter={"min_skill": min_skill, "outcome": outcome_filter})
        return ReplayDataset(chosen, cfg)

    @property
    def max_skill(self) -> float:
        return max(ep.skill for ep in self.episodes)

    def digest(self) -> str:
        return config_digest(self.config).hex()

    # ---- persistence

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        meta = {"config": self.config, "code_version": __version__}
        buf.write(HEADER.pack(MAGIC, FORMAT_VERSION, len(self.episodes), config_digest(self.config)))
        blob = json.dumps(meta, sort_keys=True).encode()
        buf.write(struct.pack("<I", len(blob)))
        buf.write(blob)
        for ep in self.episodes:
            body = RECORD_HEAD.pack(ep.outcome, ep.skill, ep.map_id, ep.game_seed, ep.player_id,
                                    len(ep.steps)) + ep.steps.astype(STEP_DTYPE).tobytes()
            buf.write(struct.pack("<I", len(body)))
            buf.write(body)
        return buf.getvalue()

    @classmethod
    def read(cls, path) -> "ReplayDataset":
        return cls.from_bytes(Path(path).read_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "ReplayDataset":
        if len(data) < HEADER.size or data[:8] != MAGIC:
            raise DatasetFormatError("not a replay dataset file")
        _, version, count, digest = HEADER.unpack_from(data, 0)
        if version != FORMAT_VERSION:
            raise DatasetFormatError(f"unsupported format version {version}")
        pos = HEADER.size
        (n,) = struct.unpack_from("<I", data, pos)
        meta = json.loads(data[pos + 4:pos + 4 + n])
        pos += 4 + n
        config = meta["config"]
        if config_digest(config) != digest:
            raise DatasetFormatError("config digest mismatch")
        episodes = []
        while pos < len(data):
            if pos + 4 + RECORD_HEAD.size > len(data):
                raise DatasetFormatError("truncated episode record")
            (size,) = struct.unpack_from("<I", data, pos)
            pos += 4
            outcome, skill, map_id, game_seed, pid, nsteps = RECORD_HEAD.unpack_from(data, pos)
            start = pos + RECORD_HEAD.size
            if start + nsteps * STEP_DTYPE.itemsize > len(data):
                raise DatasetFormatError("truncated episode record")
            steps = np.frombuffer(data, STEP_DTYPE, nsteps, start).copy()
            if RECORD_HEAD.size + steps.nbytes != size:
                raise DatasetFormatError("corrupt episode record")
            episodes.append(Episode(steps, outcome, skill, map_id, game_seed, pid))
            pos += size
        if len(episodes) != count:
            raise DatasetFormatError(f"header says {count} episodes, found {len(episodes)}")
        ds = cls(episodes, config)
        ds.code_version = meta.get("code_version")
        return ds

    # ---- reporting

    def stats(self, bin_width: float = 250.0) -> dict:
        skills = np.array([ep.skill for ep in self.episodes])
        edges = np.arange(0.0, SKILL_MAX + bin_width, bin_width)
        hist, _ = np.histogram(skills, edges)
        outcomes = [ep.outcome for ep in self.episodes]
        lengths = np.array([len(ep) for ep in self.episodes])
        return {
            "episodes": len(self.episodes),
            "steps": int(lengths.sum()),
            "mean_length": float(lengths.mean()) if len(lengths) else 0.0,
            "wins": outcomes.count(1), "draws": outcomes.count(0), "losses": outcomes.count(-1),
            "histogram": list(zip(edges[:-1].tolist(), edges[1:].tolist(), hist.tolist())),
        }

    def histogram_csv(self, bin_width: float = 250.0) -> str:
        rows = ["skill_lo,skill_hi,episodes"]
        rows += [f"{lo:g},{hi:g},{n}" for lo, hi, n in self.stats(bin_width)["histogram"]]
        return "\n".join(rows) + "\n"


def config_digest(config: dict) -> bytes:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).digest()


@dataclasses.dataclass
class Columns:
    """All steps of a dataset concatenated, plus per-step episode bookkeeping."""
    x: np.ndarray
    function: np.ndarray
    delay: np.ndarray
    target: np.ndarray
    game_loop_delta: np.ndarray
    reward: np.ndarray
    outcome: np.ndarray
    is_first: np.ndarray
    is_last: np.ndarray
    episode_start: np.ndarray
    episode_len: np.ndarray

    @classmethod
    def build(cls, episodes) -> "Columns":
        steps = np.concatenate([ep.steps for ep in episodes]) if episodes else np.zeros(0, STEP_DTYPE)
        lens = np.array([len(ep) for ep in episodes], dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(lens)[:-1]]).astype(np.int64) if len(lens) else lens
        n = len(steps)
        is_first = np.zeros(n, bool)
        is_last = np.zeros(n, bool)
        reward = np.zeros(n)
        outcome = np.repeat([float(ep.outcome) for ep in episodes], lens) if n else np.zeros(0)
        if n:
            is_first[starts] = True
            is_last[starts + lens - 1] = True
            reward[starts + lens - 1] = [ep.outcome for ep in episodes]
        return cls(encode_steps(steps), steps["function"].astype(np.int64),
                   _DELAY_INDEX[steps["delay"]], steps["target"].astype(np.int64),
                   steps["game_loop_delta"].astype(np.int64), reward, outcome, is_first, is_last,
                   starts, lens)

    def take(self, idx: np.ndarray, valid: np.ndarray | None = None) -> "Batch":
        return Batch(self.x[idx], self.function[idx], self.delay[idx], self.target[idx],
                     self.game_loop_delta[idx], self.reward[idx], self.outcome[idx], self.is_first[idx],
                     self.is_last[idx], np.ones(idx.shape, bool) if valid is None else valid)


@dataclasses.dataclass
class Batch:
    """Array view of rollouts, leading shape (M, K+1) (or any shape)."""
    x: np.ndarray
    function: np.ndarray
    delay: np.ndarray
    target: np.ndarray
    game_loop_delta: np.ndarray
    reward: np.ndarray
    outcome: np.ndarray
    is_first: np.ndarray
    is_last: np.ndarray
    valid: np.ndarray

    def __getitem__(self, key) -> "Batch":
        return Batch(*(getattr(self, f.name)[key] for f in dataclasses.fields(self)))

    @property
    def shape(self):
        return self.function.shape


# ----------------------------------------------------------------- sampling

@dataclasses.dataclass
class Rollout:
    steps: np.ndarray
    rewards: np.ndarray
    episode_index: int
    offset: int
    is_episode_start: bool
    truncated: bool


class RolloutSampler:
    """Uniform episode, then uniform offset k in [0, len-K]; windows of K+1 steps.

    Episodes shorter than K are redrawn; ``resamples`` counts those events.
    """

    def __init__(self, dataset: ReplayDataset, K: int, rng: np.random.Generator):
        if K < 1:
            raise ValueError("K must be >= 1")
        if len(dataset) == 0:
            raise ValueError("cannot sample from an empty dataset")
        self.dataset = dataset
        self.K = K
        self.rng = rng
        self.resamples = 0
        lens = dataset.columns.episode_len
        if not (lens >= K).any():
            raise ValueError(f"no episode has at least K={K} steps")

    def _draw(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        lens = self.dataset.columns.episode_len
        eps = self.rng.integers(len(lens), size=m)
        short = lens[eps] < self.K
        while short.any():
            self.resamples += int(short.sum())
            eps[short] = self.rng.integers(len(lens), size=int(short.sum()))
            short = lens[eps] < self.K
        offsets = self.rng.integers(0, lens[eps] - self.K + 1)
        return eps, offsets

    def sample(self) -> Rollout:
        (e,), (k,) = self._draw(1)
        ep = self.dataset.episodes[e]
        end = min(k + self.K + 1, len(ep))
        return Rollout(ep.steps[k:end], ep.rewards[k:end], int(e), int(k), k == 0,
                       end - k < self.K + 1)

    def sample_indices(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Global step indices (m, K+1) and a validity mask for truncated windows."""
        cols = self.dataset.columns
        eps, offsets = self._draw(m)
        j = np.arange(self.K + 1)
        local = offsets[:, None] + j[None, :]
        lens = cols.episode_len[eps][:, None]
        valid = local < lens
        local = np.minimum(local, lens - 1)
        return cols.episode_start[eps][:, None] + local, valid

    def sample_batch(self, m: int) -> Batch:
        idx, valid = self.sample_indices(m)
        return self.dataset.columns.take(idx, valid)

    def state(self) -> dict:
        return {"rng": self.rng.bit_generator.state, "resamples": self.resamples}

    def load_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state["rng"]
        self.resamples = state["resamples"]


def sample_rollout(dataset: ReplayDataset, K: int, rng: np.random.Generator) -> Rollout:
    return RolloutSampler(dataset, K, rng).sample()


class SequentialLanes:
    """M lanes of concatenated episodes, read in overlapping windows of K+1 steps.

    Window i+1 of a lane starts on the last step of window i, so training
    steps of a lane form one uninterrupted stream.
    """

    def __init__(self, dataset: ReplayDataset, M: int, K: int, rng: np.random.Generator):
        if M < 1 or K < 1:
            raise ValueError("M and K must be >= 1")
        if len(dataset) == 0:
            raise ValueError("cannot stream an empty dataset")
        self.dataset = dataset
        self.M = M
        self.K = K
        self.rng = rng
        self.lanes = [np.zeros(0, dtype=np.int64) for _ in range(M)]
        self.position = np.zeros(M, dtype=np.int64)  # stream offset of each lane's next window

    def _refill(self, j: int) -> None:
        cols = self.dataset.columns
        while len(self.lanes[j]) < self.K + 1:
            e = int(self.rng.integers(len(cols.episode_len)))
            ep = np.arange(cols.episode_start[e], cols.episode_start[e] + cols.episode_len[e])
            self.lanes[j] = np.concatenate([self.lanes[j], ep])

    def next_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Step indices (M, K+1) and the stream position of each lane's window."""
        out = np.empty((self.M, self.K + 1), dtype=np.int64)
        for j in range(self.M):
            self._refill(j)
            out[j] = self.lanes[j][:self.K + 1]
            self.lanes[j] = self.lanes[j][self.K:]
        pos = self.position.copy()
        self.position += self.K
        return out, pos

    def next_batch(self) -> tuple[Batch, np.ndarray]:
        idx, pos = self.next_indices()
        return self.dataset.columns.take(idx), pos

    def state(self) -> dict:
        return {"rng": self.rng.bit_generator.state, "position": self.position.tolist(),
                "lanes": [lane.tolist() for lane in self.lanes]}

    def load_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state["rng"]
        self.position = np.array(state["position"], dtype=np.int64)
        self.lanes = [np.array(lane, dtype=np.int64) for lane in state["lanes"]]
