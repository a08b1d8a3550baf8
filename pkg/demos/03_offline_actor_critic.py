"""
Offline actor-critic with a frozen behavior critic
==================================================

A BC agent trained with a value head provides both the behavior policy
estimate and its value function.  The actor-critic improves the function
and delay heads with V-trace advantages while the critic stays fixed.
Letting the critic learn the target policy's value instead makes the
policy drift away from the data.
"""

import numpy as np

from unplugged.agents import (ScriptedBot, agent_from_checkpoint, default_config, make_learner,
                              read_checkpoint, value_sign_accuracy)
from unplugged.evaluation import binomial_ci, play_matches, schedule, score
from unplugged.replay import SkillSampler, generate_dataset

ds = generate_dataset(3000, SkillSampler.parse("uniform"), seed=0)

# %%
# Stage one: behavior cloning with a value head.

bv = make_learner(ds, default_config("bc-value", n_frames=1_000_000))
bv.run()
bv_ckpt = read_checkpoint(bv.checkpoint_bytes())
print("value sign accuracy", round(value_sign_accuracy(bv_ckpt.params, ds), 3))

# %%
# Stage two: offline actor-critic from that checkpoint, with the fixed
# behavior critic and with a learned one.

runs = {}
for critic in ("v_mu", "v_pi"):
    learner = make_learner(ds, default_config("oac", n_frames=1_000_000, critic=critic), bv_ckpt)
    learner.run()
    runs[critic] = learner
    rho = [h["mean_rho_bar"] for h in learner.history]
    print(critic, "clipped rho: start", round(rho[0], 3), "end", round(float(np.mean(rho[-20:])), 3))

# %%
# The learned critic lets the policy leave the support of the data, and the
# clipped importance ratio falls much further.  Early in training that can
# still win more games; run both for the full 10^7-frame default and the
# learned-critic agent collapses while the fixed-critic one holds.

for critic, learner in runs.items():
    ckpt = read_checkpoint(learner.checkpoint_bytes())
    res = play_matches(agent_from_checkpoint(ckpt), ScriptedBot(5), schedule(400, 1, (0, 1)))
    s = score(res)
    print(critic, f"{s:.3f}", [round(v, 3) for v in binomial_ci(s, len(res))])
