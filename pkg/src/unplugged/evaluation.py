"""Match play, win-rate matrices, robustness and anchored Elo ratings."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from itertools import combinations

import numpy as np

from unplugged import __version__
from unplugged.env import N_MAPS, advance, apply, new_game

ELO_SCALE = 400.0
DRAW_SCORE = 0.5


class SchemaError(ValueError):
    """Matrix or ratings inputs do not describe the same agents."""


@dataclasses.dataclass(frozen=True)
class MatchResult:
    outcome: int             # +1 / 0 / -1 for agent a
    map_id: int
    seed: int
    a_side: int
    forfeit: str | None = None  # "a" or "b" when a side ran out of time


def agent_rngs(seed: int, map_id: int) -> list[np.random.Generator]:
    """Per-side agent generators of one game; tied to the side, not the agent."""
    return [np.random.default_rng([seed, map_id, 7919, side]) for side in (0, 1)]


def play_matches(agent_a, agent_b, games, time_budget: float | None = None) -> list[MatchResult]:
    """Play ``games`` = [(map_id, seed, a_side), ...] in lockstep.

    Each agent is called once per round with every game where it is to move.
    ``time_budget`` is the allowed seconds per decision (averaged over the
    batch of a call); a side that exceeds it forfeits those games.
    """
    games = [(int(m), int(s), int(side)) for m, s, side in games]
    states = [new_game(s, m) for m, s, _ in games]
    rngs = [agent_rngs(s, m) for m, s, _ in games]
    forfeit: list[str | None] = [None] * len(games)
    live = [i for i, st in enumerate(states) if st.terminal is None]
    while live:
        moves = {"a": [], "b": []}
        for i in live:
            pid, obs = advance(states[i])
            who = "a" if pid == games[i][2] else "b"
            moves[who].append((i, pid, obs))
        for who, agent in (("a", agent_a), ("b", agent_b)):
            batch = moves[who]
            if not batch:
                continue
            t0 = time.perf_counter()
            actions = agent.act([obs for _, _, obs in batch], [rngs[i][pid] for i, pid, _ in batch])
            slow = time_budget is not None and (time.perf_counter() - t0) / len(batch) > time_budget
            for (i, pid, _), action in zip(batch, actions):
                if slow:
                    forfeit[i] = who
                else:
                    apply(states[i], pid, action)
        live = [i for i in live if states[i].terminal is None and forfeit[i] is None]
    results = []
    for (m, s, side), st, ff in zip(games, states, forfeit):
        if ff is not None:
            outcome = -1 if ff == "a" else 1
        else:
            outcome = int(st.terminal[side])
        results.append(MatchResult(outcome, m, s, side, ff))
    return results


def play_match(agent_a, agent_b, map_id: int, seed: int, a_side: int = 0,
               time_budget: float | None = None) -> MatchResult:
    return play_matches(agent_a, agent_b, [(map_id, seed, a_side)], time_budget)[0]


def score(results) -> float:
    """Win frequency plus half the draw frequency."""
    return sum(1.0 if r.outcome > 0 else DRAW_SCORE if r.outcome == 0 else 0.0
               for r in results) / len(results)


def schedule(n_games: int, seed: int, pair: tuple[int, int], maps=range(N_MAPS)) -> list[tuple[int, int, int]]:
    """Uniform maps, alternating sides (the first agent starts on side 0)."""
    maps = list(maps)
    rng = np.random.default_rng([seed, *pair])
    map_idx = rng.integers(len(maps), size=n_games)
    seeds = rng.integers(0, 2**31 - 1, size=n_games)
    return [(maps[int(m)], int(s), g % 2) for g, (m, s) in enumerate(zip(map_idx, seeds))]


@dataclasses.dataclass
class WinRateMatrix:
    agents: list[str]
    f: np.ndarray           # f[i, j]: score of i against j
    games: np.ndarray       # games played per cell
    forfeits: np.ndarray    # forfeits by i against j
    spec: dict = dataclasses.field(default_factory=dict)
    code_version: str = __version__

    def index(self, name: str) -> int:
        try:
            return self.agents.index(name)
        except ValueError:
            raise SchemaError(f"agent {name!r} not in matrix {self.agents}") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config: {json.dumps(self.spec, sort_keys=True)}\n")
        buf.write(f"# code_version: {self.code_version}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent", "opponent", "score", "games", "forfeits"])
        for i, a in enumerate(self.agents):
            for j, b in enumerate(self.agents):
                if i != j:
                    w.writerow([a, b, repr(float(self.f[i, j])), int(self.games[i, j]),
                                int(self.forfeits[i, j])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "WinRateMatrix":
        spec, version, rows = _read_csv(text)
        need = {"agent", "opponent", "score", "games", "forfeits"}
        if not rows or not need <= rows[0].keys():
            raise SchemaError(f"matrix CSV needs columns {sorted(need)}")
        agents: list[str] = []
        for r in rows:
            for name in (r["agent"], r["opponent"]):
                if name not in agents:
                    agents.append(name)
        n = len(agents)
        f = np.full((n, n), 0.5)
        games = np.zeros((n, n), dtype=np.int64)
        forfeits = np.zeros((n, n), dtype=np.int64)
        for r in rows:
            i, j = agents.index(r["agent"]), agents.index(r["opponent"])
            f[i, j] = float(r["score"])
            games[i, j] = int(r["games"])
            forfeits[i, j] = int(r["forfeits"])
        return cls(agents, f, games, forfeits, spec, version)


def _read_csv(text: str) -> tuple[dict, str, list[dict]]:
    spec, version, body = {}, "unknown", []
    for line in text.splitlines():
        if line.startswith("# config: "):
            spec = json.loads(line[len("# config: "):])
        elif line.startswith("# code_version: "):
            version = line[len("# code_version: "):].strip()
        elif not line.startswith("#"):
            body.append(line)
    return spec, version, list(csv.DictReader(body))


def win_rate_matrix(agents, n_games_per_pair: int, maps=range(N_MAPS), seed: int = 0,
                    time_budget: float | None = None, names=None, progress=None) -> WinRateMatrix:
    """Play every unordered pair ``n_games_per_pair`` times and tabulate scores."""
    if n_games_per_pair < 1:
        raise ValueError("n_games_per_pair must be >= 1")
    names = list(names or [a.name for a in agents])
    if len(set(names)) != len(names):
        raise SchemaError(f"agent names must be unique, got {names}")
    n = len(agents)
    f = np.full((n, n), 0.5)
    games = np.zeros((n, n), dtype=np.int64)
    forfeits = np.zeros((n, n), dtype=np.int64)
    for i, j in combinations(range(n), 2):
        results = play_matches(agents[i], agents[j], schedule(n_games_per_pair, seed, (i, j), maps),
                               time_budget)
        f[i, j] = score(results)
        f[j, i] = 1.0 - f[i, j]
        games[i, j] = games[j, i] = len(results)
        forfeits[i, j] = sum(r.forfeit == "a" for r in results)
        forfeits[j, i] = sum(r.forfeit == "b" for r in results)
        if progress:
            progress(names[i], names[j], f[i, j])
    spec = {"n_games_per_pair": n_games_per_pair, "maps": list(maps), "seed": seed,
            "draw_score": DRAW_SCORE, "time_budget": time_budget}
    return WinRateMatrix(names, f, games, forfeits, spec)


def binomial_ci(p: float, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Normal-approximation 95% interval of a win rate."""
    half = z * math.sqrt(max(p * (1 - p), 0.0) / n)
    return p - half, p + half


# ------------------------------------------------------------------ ratings

def robustness(matrix: WinRateMatrix, reference_set) -> dict[str, float]:
    """Worst-case score of each agent over the reference agents."""
    refs = [matrix.index(q) for q in reference_set]
    if not refs:
        raise ValueError("reference set is empty")
    return {p: float(min(matrix.f[i, j] for j in refs)) for i, p in enumerate(matrix.agents)}


def expected_score(e_p, e_q):
    return 1.0 / (1.0 + 10.0 ** ((np.asarray(e_q) - np.asarray(e_p)) / ELO_SCALE))


@dataclasses.dataclass
class EloRatings:
    ratings: dict[str, float]
    anchors: dict[str, float]
    unbounded: dict[str, str]  # agent -> "+inf" / "-inf"
    iterations: int = 0

    def to_csv(self, robust: dict[str, float] | None = None, spec: dict | None = None) -> str:
        buf = io.StringIO()
        buf.write(f"# config: {json.dumps(spec or {'anchors': self.anchors}, sort_keys=True)}\n")
        buf.write(f"# code_version: {__version__}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent", "elo", "anchored", "unbounded", "robustness"])
        for a, e in self.ratings.items():
            w.writerow([a, repr(float(e)), int(a in self.anchors), self.unbounded.get(a, ""),
                        "" if robust is None else repr(robust[a])])
        return buf.getvalue()


def _solve_rating(scores, opp, weights, e0, tol):
    """Root of sum w (s - sigma(e - e_q)) = 0, the maximizer of the concave log-likelihood."""
    def grad(e):
        return float(np.sum(weights * (scores - expected_score(e, opp))))

    lo, hi = e0 - 400.0, e0 + 400.0
    while grad(lo) < 0:
        lo -= 800.0
    while grad(hi) > 0:
        hi += 800.0
    e = min(max(e0, lo), hi)
    for _ in range(200):
        g = grad(e)
        if g > 0:
            lo = e
        else:
            hi = e
        sig = expected_score(e, opp)
        curv = float(np.sum(weights * sig * (1 - sig))) * math.log(10) / ELO_SCALE
        step = g / curv if curv > 0 else 0.0
        nxt = e + step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - e) < tol * 1e-3 or hi - lo < tol * 1e-3:
            return nxt
        e = nxt
    return e


def elo_fit(matrix: WinRateMatrix, anchored: dict[str, float], tol: float = 1e-6,
            max_sweeps: int = 10_000) -> EloRatings:
    """Maximum-likelihood ratings with fixed anchors, by coordinate ascent.

    Each sweep maximizes every free rating's cross-entropy objective against
    all other agents (weighted by games played); sweeps stop when no rating
    moves by ``tol`` or more.  Ratings are fitted relative to the first
    anchor, so shifting all anchors shifts every result by the same amount.
    """
    if not anchored:
        raise ValueError("at least one anchored agent is required")
    for a in anchored:
        matrix.index(a)
    names = matrix.agents
    n = len(names)
    base = float(next(iter(anchored.values())))
    e = np.zeros(n)
    fixed = np.zeros(n, bool)
    for a, r in anchored.items():
        e[names.index(a)] = float(r) - base
        fixed[names.index(a)] = True
    weights = matrix.games.astype(np.float64)
    if not weights.any():
        weights = 1.0 - np.eye(n)
    np.fill_diagonal(weights, 0.0)

    # agents that never lose (or never score) against anyone have no finite MLE
    unbounded = {}
    for i in range(n):
        if fixed[i]:
            continue
        opp = weights[i] > 0
        s = matrix.f[i, opp]
        if len(s) and np.all(s >= 1.0):
            unbounded[names[i]] = "+inf"
        elif len(s) and np.all(s <= 0.0):
            unbounded[names[i]] = "-inf"
    live = np.array([names[i] not in unbounded for i in range(n)])
    free = [i for i in range(n) if not fixed[i] and live[i]]

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        moved = 0.0
        for i in free:
            opp = live & (weights[i] > 0)
            opp[i] = False
            if not opp.any():
                continue
            new = _solve_rating(matrix.f[i, opp], e[opp], weights[i, opp], e[i], tol)
            moved = max(moved, abs(new - e[i]))
            e[i] = new
        if moved < tol:
            break
    ratings = {}
    for i, a in enumerate(names):
        if a in unbounded:
            ratings[a] = math.inf if unbounded[a] == "+inf" else -math.inf
        else:
            ratings[a] = float(anchored[a]) if fixed[i] else float(e[i] + base)
    return EloRatings(ratings, dict(anchored), unbounded, sweeps)


def read_ratings_csv(text: str) -> tuple[dict, str, list[dict]]:
    return _read_csv(text)


# ------------------------------------------------------------------- report

def _color(v: float) -> str:
    """Red (0) to white (50) to blue (100)."""
    v = min(max(v, 0.0), 100.0) / 100.0
    if v < 0.5:
        t = v / 0.5
        r, g, b = 220, int(60 + 195 * t), int(60 + 195 * t)
    else:
        t = (v - 0.5) / 0.5
        r, g, b = int(255 - 195 * t), int(255 - 135 * t), 255 - int(35 * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(matrix: WinRateMatrix) -> str:
    """Win-rate matrix as an SVG heatmap, values normalized to [0, 100]."""
    n = len(matrix.agents)
    cell, pad = 56, 110
    size = pad + n * cell + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'font-family="sans-serif" font-size="12">']
    for i, a in enumerate(matrix.agents):
        y = pad + i * cell
        out.append(f'<text x="{pad - 6}" y="{y + cell / 2 + 4}" text-anchor="end">{a}</text>')
        out.append(f'<text x="{pad + i * cell + cell / 2}" y="{pad - 8}" text-anchor="middle">{a}</text>')
        for j in range(n):
            v = 100.0 * matrix.f[i, j]
            x = pad + j * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_color(v)}" '
                       f'stroke="#ffffff"/>')
            out.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle">{v:.0f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def report_table(matrix: WinRateMatrix, ratings: EloRatings, robust: dict[str, float],
                 strongest_bot: str) -> list[dict]:
    j = matrix.index(strongest_bot)
    rows = []
    for i, a in enumerate(matrix.agents):
        rows.append({"agent": a, "Robustness": 100.0 * robust[a], "Elo": ratings.ratings[a],
                     f"vs {strongest_bot}": 100.0 * matrix.f[i, j]})
    return rows


def report_markdown(rows: list[dict]) -> str:
    keys = list(rows[0])
    lines = ["| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
    for r in rows:
        cells = [r["agent"]] + [f"{r[k]:.0f}" if math.isfinite(r[k]) else str(r[k]) for k in keys[1:]]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
