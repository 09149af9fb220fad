"""Transition datasets: collection, a binary file format, and mixing.

A dataset is a flat array of (obs, action, reward, next_obs, done)
transitions plus provenance (behavior policy name, environment digest,
seeds).  Files carry a canonical JSON header followed by packed records,
so identical inputs always serialize to identical bytes.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, DatasetConfig, EnvConfig, RadioConfig, env_digest
from .env import SchedulingEnv
from .rng import named_rng

FILE_MAGIC = b"ORLD"
FILE_VERSION = 1


def record_dtype(obs_dim: int) -> np.dtype:
    """Packed on-disk layout of one transition (little-endian, no padding)."""
    return np.dtype([
        ("obs", "<f4", (obs_dim,)),
        ("action", "<u4"),
        ("reward", "<f4"),
        ("next_obs", "<f4", (obs_dim,)),
        ("done", "u1"),
    ])


@dataclass
class Dataset:
    """In-memory transitions plus the provenance needed to mix and train."""

    obs: np.ndarray            # (n, d) float32
    actions: np.ndarray        # (n,) uint32
    rewards: np.ndarray        # (n,) float32
    next_obs: np.ndarray       # (n, d) float32
    dones: np.ndarray          # (n,) uint8
    env_digest: str
    obs_dim: int
    n_actions: int
    bp_name: str
    seeds: list[int] = field(default_factory=list)
    sources: list[dict] = field(default_factory=list)

    @property
    def count(self) -> int:
        return self.obs.shape[0]

    def header_dict(self) -> dict:
        return {
            "version": FILE_VERSION,
            "count": self.count,
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "env_digest": self.env_digest,
            "bp_name": self.bp_name,
            "seeds": [int(s) for s in self.seeds],
            "sources": self.sources,
        }

    def take(self, indices: np.ndarray) -> "Dataset":
        return Dataset(obs=self.obs[indices], actions=self.actions[indices],
                       rewards=self.rewards[indices], next_obs=self.next_obs[indices],
                       dones=self.dones[indices], env_digest=self.env_digest,
                       obs_dim=self.obs_dim, n_actions=self.n_actions,
                       bp_name=self.bp_name, seeds=list(self.seeds),
                       sources=list(self.sources))


def collect(policy, env_cfg: EnvConfig, radio_cfg: RadioConfig,
            n_transitions: int, env_seeds=None, seed: int = 0,
            dataset_cfg: DatasetConfig | None = None) -> Dataset:
    """Roll ``policy`` over fresh environments until n transitions are stored.

    Episodes use one environment seed each; with ``env_seeds`` given the
    list is cycled, otherwise consecutive seeds start at the dataset
    config's ``env_seed_start``.  The final episode is truncated so the
    dataset holds exactly ``n_transitions`` rows.
    """
    if n_transitions <= 0:
        raise ConfigError(f"n_transitions must be positive, got {n_transitions}")
    episodes = math.ceil(n_transitions / env_cfg.episode_len)
    if env_seeds is None:
        start = (dataset_cfg or DatasetConfig()).env_seed_start
        env_seeds = list(range(start, start + episodes))
    env_seeds = [int(s) for s in env_seeds]
    if not env_seeds:
        raise ConfigError("need at least one environment seed")

    d = env_cfg.obs_dim
    obs = np.empty((n_transitions, d), dtype=np.float32)
    actions = np.empty(n_transitions, dtype=np.uint32)
    rewards = np.empty(n_transitions, dtype=np.float32)
    next_obs = np.empty((n_transitions, d), dtype=np.float32)
    dones = np.empty(n_transitions, dtype=np.uint8)

    used_seeds = []
    row = 0
    for ep in range(episodes):
        env_seed = env_seeds[ep % len(env_seeds)]
        used_seeds.append(env_seed)
        env = SchedulingEnv(env_cfg, radio_cfg, env_seed)
        policy.reset()
        rng = named_rng(seed, "collect", ep)
        o = env.observation
        while not env.done and row < n_transitions:
            a = policy.act(env, o, rng)
            res = env.step(a)
            obs[row] = o.vector
            actions[row] = a
            rewards[row] = res.reward
            next_obs[row] = res.obs.vector
            dones[row] = 1 if res.done else 0
            o = res.obs
            row += 1
        if row >= n_transitions:
            break

    return Dataset(obs=obs, actions=actions, rewards=rewards, next_obs=next_obs,
                   dones=dones, env_digest=env_digest(env_cfg, radio_cfg),
                   obs_dim=d, n_actions=env_cfg.n_actions,
                   bp_name=policy.name, seeds=used_seeds, sources=[])


def save_dataset(ds: Dataset, path) -> None:
    """Magic, version, canonical JSON header, then packed records."""
    header = json.dumps(ds.header_dict(), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    records = np.empty(ds.count, dtype=record_dtype(ds.obs_dim))
    records["obs"] = ds.obs
    records["action"] = ds.actions
    records["reward"] = ds.rewards
    records["next_obs"] = ds.next_obs
    records["done"] = ds.dones
    with open(path, "wb") as fh:
        fh.write(FILE_MAGIC)
        fh.write(struct.pack("<II", FILE_VERSION, len(header)))
        fh.write(header)
        fh.write(records.tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != FILE_MAGIC:
        raise ValueError(f"{path} is not a dataset file (bad magic)")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != FILE_VERSION:
        raise ValueError(f"unsupported dataset version {version} in {path}")
    if len(data) < 12 + header_len:
        raise ValueError(f"truncated dataset header in {path}")
    header = json.loads(data[12:12 + header_len].decode("utf-8"))
    body = data[12 + header_len:]
    dt = record_dtype(int(header["obs_dim"]))
    count = int(header["count"])
    expected = count * dt.itemsize
    if len(body) != expected:
        found = len(body) // dt.itemsize
        raise ValueError(
            f"corrupt dataset {path}: header says {count} records "
            f"({expected} bytes) but the body holds {found} complete records "
            f"({len(body)} bytes)"
        )
    records = np.frombuffer(body, dtype=dt)
    return Dataset(
        obs=records["obs"].copy(),
        actions=records["action"].copy(),
        rewards=records["reward"].copy(),
        next_obs=records["next_obs"].copy(),
        dones=records["done"].copy(),
        env_digest=header["env_digest"],
        obs_dim=int(header["obs_dim"]),
        n_actions=int(header["n_actions"]),
        bp_name=header["bp_name"],
        seeds=[int(s) for s in header.get("seeds", [])],
        sources=list(header.get("sources", [])),
    )


def allocate_counts(proportions, total: int) -> list[int]:
    """Integer split of ``total`` by largest remainder; ties to lower index."""
    props = [float(p) for p in proportions]
    if not props:
        raise ValueError("need at least one proportion")
    if any(p < 0 for p in props):
        raise ValueError(f"proportions must be non-negative, got {props}")
    if abs(sum(props) - 1.0) > 1e-9:
        raise ValueError(f"proportions must sum to 1, got sum {sum(props)!r}")
    exact = [p * total for p in props]
    counts = [int(math.floor(e)) for e in exact]
    remainder = total - sum(counts)
    fracs = np.array([e - c for e, c in zip(exact, counts)])
    order = np.argsort(-fracs, kind="stable")
    for idx in order[:remainder]:
        counts[idx] += 1
    return counts


def mix(sources, proportions, total: int, rng: np.random.Generator,
        name: str = "mixed") -> Dataset:
    """Sample without replacement from each source and shuffle the union.

    Sources must agree on environment digest, observation length and
    action-space size; each must hold at least its allocated count.
    """
    sources = list(sources)
    if len(sources) != len(list(proportions)):
        raise ValueError(f"{len(sources)} sources but {len(list(proportions))} proportions")
    if total <= 0:
        raise ValueError(f"total must be positive, got {total}")
    ref = sources[0]
    for s in sources[1:]:
        for attr in ("env_digest", "obs_dim", "n_actions"):
            if getattr(s, attr) != getattr(ref, attr):
                raise ValueError(
                    f"dataset {s.bp_name!r} is incompatible with {ref.bp_name!r}: "
                    f"{attr} {getattr(s, attr)!r} != {getattr(ref, attr)!r}"
                )
    counts = allocate_counts(proportions, total)
    parts = []
    provenance = []
    for s, c, p in zip(sources, counts, proportions):
        if c > s.count:
            raise ValueError(
                f"dataset {s.bp_name!r} holds {s.count} transitions but the "
                f"mix needs {c}"
            )
        picked = rng.choice(s.count, size=c, replace=False)
        parts.append(s.take(picked))
        provenance.append({"name": s.bp_name, "proportion": float(p), "count": int(c)})

    merged = Dataset(
        obs=np.concatenate([p.obs for p in parts]),
        actions=np.concatenate([p.actions for p in parts]),
        rewards=np.concatenate([p.rewards for p in parts]),
        next_obs=np.concatenate([p.next_obs for p in parts]),
        dones=np.concatenate([p.dones for p in parts]),
        env_digest=ref.env_digest,
        obs_dim=ref.obs_dim,
        n_actions=ref.n_actions,
        bp_name=name,
        seeds=[],
        sources=provenance,
    )
    perm = rng.permutation(total)
    return Dataset(obs=merged.obs[perm], actions=merged.actions[perm],
                   rewards=merged.rewards[perm], next_obs=merged.next_obs[perm],
                   dones=merged.dones[perm], env_digest=merged.env_digest,
                   obs_dim=merged.obs_dim, n_actions=merged.n_actions,
                   bp_name=name, seeds=[], sources=provenance)


def parse_mix_spec(text: str) -> list[tuple[str, float]]:
    """Parse "a.orld:0.5,b.orld:0.3,c.orld:0.2" into (path, proportion) pairs."""
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        path, sep, prop = chunk.rpartition(":")
        if not sep or not path:
            raise ValueError(f"bad mix component {chunk!r}; expected PATH:PROPORTION")
        try:
            value = float(prop)
        except ValueError:
            raise ValueError(f"bad proportion {prop!r} in mix component {chunk!r}") from None
        pairs.append((path, value))
    if not pairs:
        raise ValueError(f"empty mix spec {text!r}")
    return pairs
