"""Train the three offline algorithms on one behavior-policy dataset.

No environment steps happen during training; the agents only ever see
the recorded transitions.  Each algorithm guards against out-of-dataset
actions in its own way: BCQ masks them, CQL penalizes their values, IQL
never queries them at all (expectile value + advantage-weighted cloning).
Expect scores near the behavior policy's own: with a single mediocre
dataset there is little room to stitch something better together.
"""
import dataclasses
import time

from rrmlab.config import desk_profile
from rrmlab.dataset import collect
from rrmlab.harness import evaluate_policy
from rrmlab.offline import train_offline
from rrmlab.policies import make_policy

N = 20_000
EPOCHS = 3       # desk profile uses 10_000-update epochs; 3 are enough here

cfg = desk_profile()
cfg.offline = dataclasses.replace(cfg.offline, epochs=EPOCHS)

bp = make_policy("greedy")
bp_score = evaluate_policy(bp, cfg.env, cfg.radio, cfg.metric).score
print(f"behavior policy (greedy): R={bp_score:.2f}")

ds = collect(bp, cfg.env, cfg.radio, N, seed=17)
print(f"dataset: {ds.count} transitions from {ds.bp_name}\n")

for algo in ("bcq", "cql", "iql"):
    t0 = time.time()
    _, curve = train_offline(ds, cfg, f"runs/demo_offline_{algo}", seed=0,
                             algo=algo)
    final = curve[-1]["r_score_mean"]
    print(f"{algo}: R={final:.2f} ({final / bp_score:.2f}x BP) "
          f"[{time.time() - t0:.0f} s]")
