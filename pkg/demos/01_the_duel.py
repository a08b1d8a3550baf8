"""
A first look at the delayed-action duel
=======================================

Two players race to grow an economy, turn it into an army and wreck the
opponent's economy.  Every action carries a delay: the number of internal
loops before the acting player observes the game again.
"""

import numpy as np

from unplugged.env import (Function, StructuredAction, advance, apply, new_game, play_game,
                           scripted_policy)

# %%
# Step through a game by hand.  ``advance`` moves the clock to whichever
# player acts next; ``apply`` executes that player's action.

state = new_game(seed=1, map_id=0)
pid, obs = advance(state)
print("player", pid, "sees", obs)
apply(state, pid, StructuredAction(Function.SCOUT, 1))
pid, obs = advance(state)
print("player", pid, "acts at loop", state.game_loop)

# %%
# Opponent information is hidden until a recent scout.

apply(state, pid, StructuredAction(Function.HARVEST, 4))
pid, obs = advance(state)
print("player", pid, "opponent visible:", obs.opp_visible, "economy", obs.opp_economy)

# %%
# Scripted bots of level l follow a heuristic with probability l/5 and act
# uniformly at random otherwise.

rng = np.random.default_rng(0)
log = play_game(0, 2, [lambda o: scripted_policy(5, o, rng), lambda o: scripted_policy(0, o, rng)])
print("outcome", log.outcome, "after", log.final_loop, "loops,", [len(a) for a in log.actions], "decisions")

# %%
# Over many games the stronger bot nearly always wins.

wins = 0
for seed in range(300):
    log = play_game(seed, seed % 4, [lambda o: scripted_policy(5, o, rng), lambda o: scripted_policy(0, o, rng)])
    wins += log.outcome[0] > 0
print(f"level 5 beats level 0 in {wins / 300:.0%} of games")
