"""
A small league: win rates, robustness and Elo
=============================================

Scripted bots of every level play each other.  The resulting matrix gives
each agent's worst-case score (robustness) and an Elo rating anchored at
the strongest bot.
"""

from unplugged.agents import MCTSConfig, ScriptedBot, agent_from_checkpoint, default_config, make_learner, read_checkpoint
from unplugged.evaluation import elo_fit, heatmap_svg, report_markdown, report_table, robustness, win_rate_matrix
from unplugged.replay import SkillSampler, generate_dataset

# %%
# A MuZero-style supervised model, used plainly and with search at inference.

ds = generate_dataset(3000, SkillSampler.parse("uniform"), seed=0)
learner = make_learner(ds, default_config("mzs", n_frames=500_000))
learner.run()
ckpt = read_checkpoint(learner.checkpoint_bytes())
agents = [ScriptedBot(level) for level in (1, 3, 5)]
agents += [agent_from_checkpoint(ckpt, "mzs"), agent_from_checkpoint(ckpt, "mzs-mcts", mcts=MCTSConfig(16))]

# %%
# Every pair plays 100 games on uniformly drawn maps, alternating sides.

matrix = win_rate_matrix(agents, 100, seed=0)
for name, row in zip(matrix.agents, matrix.f):
    print(f"{name:9s}", " ".join(f"{100 * v:4.0f}" for v in row))

# %%
# Ratings and the league table.

ratings = elo_fit(matrix, {"bot5": 1000.0})
robust = robustness(matrix, matrix.agents)
table = sorted(report_table(matrix, ratings, robust, "bot5"), key=lambda r: -r["Robustness"])
print(report_markdown(table))

with open("league_heatmap.svg", "w") as fh:
    fh.write(heatmap_svg(matrix))
print("heatmap written to league_heatmap.svg")
