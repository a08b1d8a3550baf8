"""Two-player duel with delayed actions, fog of war and scripted bots.

A game runs on an internal clock (``game_loop``).  Each player chooses an
action together with a delay: the number of internal steps until that
player observes the game again.  Only the acting steps are ever observed,
which is what the replay store records.

Typical driver loop::

    state = new_game(seed, map_id)
    while state.terminal is None:
        pid, obs = advance(state)
        apply(state, pid, policy(obs))
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np

L_MAX = 512
SCOUT_WINDOW = 16
N_MAPS = 4
DELAYS = (1, 2, 4, 8)
MAX_LEVEL = 5


class Function(enum.IntEnum):
    HARVEST = 0
    BUILD = 1
    ATTACK = 2
    SCOUT = 3
    NOOP = 4


class Target(enum.IntEnum):
    ECON = 0
    ARMY = 1


N_FUNCTIONS = len(Function)
N_DELAYS = len(DELAYS)
N_TARGETS = len(Target)


class ContractViolation(RuntimeError):
    """The engine was driven in a way its protocol forbids."""


@dataclasses.dataclass(frozen=True)
class StructuredAction:
    function: Function
    delay: int
    target: Target = Target.ECON

    def __post_init__(self):
        object.__setattr__(self, "function", Function(self.function))
        if self.delay not in DELAYS:
            raise ValueError(f"delay must be one of {DELAYS}, got {self.delay}")
        target = Target(self.target) if self.function == Function.ATTACK else Target.ECON
        object.__setattr__(self, "target", target)

    @property
    def delay_index(self) -> int:
        return DELAYS.index(self.delay)

    @classmethod
    def from_indices(cls, f: int, d: int, t: int = 0) -> "StructuredAction":
        return cls(Function(int(f)), DELAYS[int(d)], Target(int(t)))


def all_actions() -> list[StructuredAction]:
    """Every canonical action; ATTACK is the only function with two targets."""
    out = []
    for f in Function:
        for d in DELAYS:
            targets = Target if f == Function.ATTACK else (Target.ECON,)
            for t in targets:
                out.append(StructuredAction(f, d, t))
    return out


VALID_ACTIONS = tuple(all_actions())


@dataclasses.dataclass(frozen=True)
class Observation:
    own_economy: int
    own_army: int
    game_loop_frac: float
    prev_delay: int
    opp_economy: int
    opp_army: int
    opp_visible: bool
    skill_conditioning: float
    last_own_function: Function

    def with_skill(self, skill_conditioning: float) -> "Observation":
        return dataclasses.replace(self, skill_conditioning=float(skill_conditioning))


@dataclasses.dataclass
class PlayerState:
    economy: int
    army: int = 0
    last_scout_loop: int | None = None
    next_act_loop: int = 0
    last_obs_loop: int | None = None
    last_function: Function = Function.NOOP


@dataclasses.dataclass
class EngineState:
    game_loop: int
    players: list[PlayerState]
    map_id: int
    rng: np.random.Generator
    terminal: tuple[int, int] | None = None
    seed: int = 0
    # (player, observation) handed out by the last advance(), not yet acted on
    pending: int | None = None

    def fingerprint(self) -> tuple:
        """Hashable snapshot, including the generator state, for exact comparisons."""
        players = tuple(dataclasses.astuple(p) for p in self.players)
        rng = repr(self.rng.bit_generator.state)
        return (self.game_loop, players, self.map_id, rng, self.terminal, self.pending)


def game_rng(seed: int, map_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(map_id)])))


def new_game(seed: int, map_id: int) -> EngineState:
    if not 0 <= map_id < N_MAPS:
        raise ValueError(f"map_id must be in [0, {N_MAPS - 1}], got {map_id}")
    players = [PlayerState(economy=4 + map_id) for _ in range(2)]
    return EngineState(0, players, int(map_id), game_rng(seed, map_id), seed=int(seed))


def binomial_half(rng: np.random.Generator, n: int) -> int:
    """Binomial(n, 1/2) from n uniforms; draws nothing when n == 0."""
    if n <= 0:
        return 0
    return int(np.count_nonzero(rng.random(n) < 0.5))


def observe(state: EngineState, pid: int) -> Observation:
    me = state.players[pid]
    opp = state.players[1 - pid]
    visible = me.last_scout_loop is not None and state.game_loop - me.last_scout_loop <= SCOUT_WINDOW
    prev_delay = 0 if me.last_obs_loop is None else state.game_loop - me.last_obs_loop
    return Observation(
        own_economy=me.economy,
        own_army=me.army,
        game_loop_frac=min(1.0, state.game_loop / L_MAX),
        prev_delay=prev_delay,
        opp_economy=opp.economy if visible else -1,
        opp_army=opp.army if visible else -1,
        opp_visible=visible,
        skill_conditioning=0.0,
        last_own_function=me.last_function,
    )


def advance(state: EngineState) -> tuple[int, Observation]:
    """Move the clock to the next acting player and return its observation."""
    if state.terminal is not None:
        raise ContractViolation("advance() called on a finished game")
    if state.pending is not None:
        raise ContractViolation(f"player {state.pending} has not acted yet")
    loops = [p.next_act_loop for p in state.players]
    state.game_loop = min(loops)
    pid = 0 if loops[0] == state.game_loop else 1
    obs = observe(state, pid)
    state.players[pid].last_obs_loop = state.game_loop
    state.pending = pid
    return pid, obs


def _set_outcome(state: EngineState) -> None:
    econ = [p.economy for p in state.players]
    for pid in (0, 1):
        if econ[pid] <= 0:
            state.terminal = (-1, 1) if pid == 0 else (1, -1)
            return
    if min(p.next_act_loop for p in state.players) >= L_MAX:
        state.game_loop = L_MAX
        sign = int(np.sign(econ[0] - econ[1]))
        state.terminal = (sign, -sign)


def apply(state: EngineState, pid: int, action: StructuredAction) -> EngineState:
    """Apply ``action`` for ``pid`` at the current game loop (mutates ``state``)."""
    if state.terminal is not None:
        raise ContractViolation("apply() called on a finished game")
    me = state.players[pid]
    if state.pending != pid or me.next_act_loop != state.game_loop:
        raise ContractViolation(f"player {pid} acted out of turn at loop {state.game_loop}")
    opp = state.players[1 - pid]
    f = action.function
    if f == Function.HARVEST:
        me.economy += 1
    elif f == Function.BUILD:
        if me.economy >= 2:
            me.economy -= 2
            me.army += 1
    elif f == Function.ATTACK:
        hits = binomial_half(state.rng, me.army)
        if action.target == Target.ECON:
            opp.economy -= hits
        else:
            opp.army = max(0, opp.army - hits)
    elif f == Function.SCOUT:
        me.last_scout_loop = state.game_loop
    me.last_function = f
    me.next_act_loop = state.game_loop + action.delay
    state.pending = None
    _set_outcome(state)
    return state


def heuristic_action(obs: Observation, rng: np.random.Generator) -> StructuredAction:
    """Strongest scripted behavior: race an army, keep the economy alive, scout when blind."""
    if obs.own_army >= 3:
        return StructuredAction(Function.ATTACK, 2, Target.ECON)
    if obs.opp_visible and obs.opp_army > obs.own_army and obs.own_army > 0:
        return StructuredAction(Function.ATTACK, 2, Target.ARMY)
    if not obs.opp_visible and obs.last_own_function != Function.SCOUT and rng.random() < 0.1:
        return StructuredAction(Function.SCOUT, 1)
    delay = DELAYS[int(rng.choice(3, p=(0.4, 0.4, 0.2)))]
    if obs.own_economy >= 6:
        return StructuredAction(Function.BUILD, delay)
    return StructuredAction(Function.HARVEST, delay)


def scripted_policy(level: int, obs: Observation, rng: np.random.Generator,
                    return_branch: bool = False):
    """Level-``level`` bot: heuristic with probability level/5, else uniform over valid actions."""
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be in [0, {MAX_LEVEL}], got {level}")
    heuristic = rng.random() < level / MAX_LEVEL
    if heuristic:
        action = heuristic_action(obs, rng)
    else:
        action = VALID_ACTIONS[int(rng.integers(len(VALID_ACTIONS)))]
    return (action, heuristic) if return_branch else action


@dataclasses.dataclass
class GameLog:
    """Per-player action-step logs of one finished game."""
    observations: list[list[Observation]]
    actions: list[list[StructuredAction]]
    act_loops: list[list[int]]
    outcome: tuple[int, int]
    final_loop: int


def play_game(seed: int, map_id: int, policies) -> GameLog:
    """Drive one game to the end. ``policies[pid](obs) -> StructuredAction``."""
    state = new_game(seed, map_id)
    obs_log = [[], []]
    act_log = [[], []]
    loops = [[], []]
    while state.terminal is None:
        pid, obs = advance(state)
        action = policies[pid](obs)
        obs_log[pid].append(obs)
        act_log[pid].append(action)
        loops[pid].append(state.game_loop)
        apply(state, pid, action)
    return GameLog(obs_log, act_log, loops, state.terminal, state.game_loop)
