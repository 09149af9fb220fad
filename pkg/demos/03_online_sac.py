"""Train soft actor-critic online at a scale that fits a coffee break.

Ten epochs is nowhere near convergence; the point is to watch the score
climb past the weaker baselines and to produce a learning-curve plot.
Crank EPOCHS up to the desk profile's 150 to reproduce the full run.
"""
import dataclasses
import time

from rrmlab.config import desk_profile
from rrmlab.harness import evaluate_policy, render_curves_svg
from rrmlab.policies import make_policy
from rrmlab.sac import train_online

EPOCHS = 10
OUT = "runs/demo_sac"

cfg = desk_profile()
cfg.online = dataclasses.replace(cfg.online, epochs=EPOCHS)

baselines = {}
for name in ("random", "greedy", "tdm"):
    baselines[name] = evaluate_policy(
        make_policy(name), cfg.env, cfg.radio, cfg.metric).score
    print(f"baseline {name:<7} R={baselines[name]:.2f}")

t0 = time.time()
agent, curve = train_online(cfg, OUT, seed=0, log=print)
print(f"\n{EPOCHS} epochs in {time.time() - t0:.0f} s")
print(f"final R={curve[-1]['r_score_mean']:.2f} vs random {baselines['random']:.2f}")

xs = [row["epoch"] for row in curve]
ys = [row["r_score_mean"] for row in curve]
render_curves_svg({"sac": (xs, ys)}, f"{OUT}/curves.svg",
                  baselines=baselines, title="online SAC, small run",
                  ylabel="R score")
print(f"plot -> {OUT}/curves.svg")
