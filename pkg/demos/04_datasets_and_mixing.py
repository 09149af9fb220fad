"""Record behavior-policy datasets and combine them by proportion.

Each dataset is a flat file of (obs, action, reward, next_obs, done)
records plus a JSON header naming the policy and environment geometry.
Mixing subsamples each source without replacement, with integer counts
chosen by largest-remainder rounding, then shuffles the union.
"""
import os

from rrmlab.config import desk_profile
from rrmlab.dataset import collect, load_dataset, mix, save_dataset
from rrmlab.policies import make_policy
from rrmlab.rng import named_rng

N = 2000
OUT = "runs/demo_data"
os.makedirs(OUT, exist_ok=True)

cfg = desk_profile()
paths = {}
for name in ("greedy", "tdm", "random"):
    ds = collect(make_policy(name), cfg.env, cfg.radio, N, seed=17)
    paths[name] = f"{OUT}/{name}.orld"
    save_dataset(ds, paths[name])
    done_frac = ds.dones.mean()
    print(f"{name:<7} {ds.count} transitions, reward mean {ds.rewards.mean():8.3f}, "
          f"done fraction {done_frac:.4f}")

print("\nmixing 50/25/25 ...")
sources = [load_dataset(paths[n]) for n in ("greedy", "tdm", "random")]
mixed = mix(sources, [0.5, 0.25, 0.25], N, named_rng(5, "mix"), name="blend")
save_dataset(mixed, f"{OUT}/blend.orld")
for part in mixed.sources:
    print(f"  {part['name']:<7} proportion {part['proportion']:.2f} "
          f"-> {part['count']} records")
print(f"saved -> {OUT}/blend.orld")
