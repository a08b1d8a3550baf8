"""
From replays to a cloned policy
===============================

Scripted games are logged from both sides into a skill-labelled replay
dataset.  Behavior cloning then learns to imitate the logged actions,
conditioned on the skill label, and is asked to play like the strongest
players at inference time.
"""

import numpy as np

from unplugged.agents import ScriptedBot, agent_from_checkpoint, default_config, make_learner, read_checkpoint
from unplugged.evaluation import binomial_ci, play_matches, schedule, score
from unplugged.replay import ReplayDataset, SkillSampler, generate_dataset

# %%
# Each game yields two episodes, one per side.

ds = generate_dataset(3000, SkillSampler.parse("uniform"), seed=0)
stats = ds.stats()
print(stats["episodes"], "episodes,", stats["steps"], "steps, mean length", round(stats["mean_length"], 1))

# %%
# The binary format round-trips exactly.

again = ReplayDataset.from_bytes(ds.to_bytes())
print("round trip equal:", all(a == b for a, b in zip(ds, again)))

# %%
# Skill histogram: labels cluster around 1000 * level + 1000.

for lo, hi, n in stats["histogram"]:
    if n:
        print(f"{lo:6.0f}-{hi:6.0f} {'#' * (n // 40)}")

# %%
# Train a small BC agent.  Training keeps episodes above a skill floor and
# both wins and losses.

cfg = default_config("bc", n_frames=1_000_000, seed=0)
learner = make_learner(ds, cfg)
learner.run()
ckpt = read_checkpoint(learner.checkpoint_bytes())
print("final loss", round(learner.history[-1]["loss"], 3), "inference skill", round(ckpt.inference_skill, 3))

# %%
# Evaluate against the strongest bot at two sampling temperatures.

for beta in (0.8, 1.0):
    res = play_matches(agent_from_checkpoint(ckpt, temperature=beta), ScriptedBot(5), schedule(400, 1, (0, 1)))
    s = score(res)
    lo, hi = binomial_ci(s, len(res))
    print(f"beta={beta}: {s:.3f} [{lo:.3f}, {hi:.3f}] vs bot5")
