"""Scheduling policies: random, greedy, TDM round-robin, ITLinQ and learned.

Every policy maps (env, observation) -> joint action index through a
common ``act`` interface.  Policies that need randomness take the caller's
generator so evaluation stays reproducible; deterministic policies ignore
it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError
from .env import Observation, SchedulingEnv, encode_action
from .nn import Mlp, load_checkpoint, softmax


class Policy:
    """Interface: ``reset()`` between episodes, ``act`` per slot."""

    name = "policy"

    def reset(self) -> None:
        pass

    def act(self, env: SchedulingEnv, obs: Observation, rng: np.random.Generator) -> int:
        raise NotImplementedError


class RandomPolicy(Policy):
    """Each AP picks uniformly among its valid slots; empty pools go OFF."""

    name = "random"

    def act(self, env, obs, rng):
        k = env.env_cfg.topk
        choices = []
        for i in range(env.env_cfg.n_aps):
            valid = np.flatnonzero(obs.valid[i])
            choices.append(k if len(valid) == 0 else int(rng.choice(valid)))
        return encode_action(choices, k)


class GreedyPolicy(Policy):
    """Each AP serves its highest-SINR valid slot, ignoring interference coupling."""

    name = "greedy"

    def act(self, env, obs, rng):
        k = env.env_cfg.topk
        choices = []
        for i in range(env.env_cfg.n_aps):
            if not obs.valid[i].any():
                choices.append(k)
                continue
            sinr = np.where(obs.valid[i], obs.slot_sinr_db[i], -np.inf)
            choices.append(int(np.argmax(sinr)))
        return encode_action(choices, k)


class TdmPolicy(Policy):
    """Global round-robin: one AP on per slot, cycling (AP, slot) pairs.

    The cycle runs over the concatenated valid top-k entries in (AP index,
    slot index) order and advances one entry per time slot, so activations
    interleave across APs and users.
    """

    name = "tdm"

    def __init__(self):
        self.counter = 0

    def reset(self):
        self.counter = 0

    def act(self, env, obs, rng):
        k = env.env_cfg.topk
        entries = [(i, s)
                   for i in range(env.env_cfg.n_aps)
                   for s in range(k)
                   if obs.valid[i, s]]
        choices = [k] * env.env_cfg.n_aps
        if entries:
            ap, slot = entries[self.counter % len(entries)]
            choices[ap] = slot
        self.counter += 1
        return encode_action(choices, k)


@dataclass
class ItlinqParams:
    """Admission margin (dB) and SNR exponent for the ITLinQ condition."""

    margin_db: float = 25.0
    eta: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must be in (0, 1], got {self.eta}")
        if not math.isfinite(self.margin_db):
            raise ConfigError("margin_db must be finite")


class ItlinqPolicy(Policy):
    """Information-theoretic link scheduling on the per-AP PF leaders.

    Each AP nominates its highest-PF-weight user (slot 0).  Candidates are
    scanned in decreasing weighted-rate order and admitted when, against
    every already-admitted link, the candidate's SNR^eta exceeds the
    margin times the interference it receives from that link and the
    margin times the interference it causes to that link.
    """

    name = "itlinq"

    def __init__(self, params: ItlinqParams | None = None):
        self.params = params or ItlinqParams()

    def act(self, env, obs, rng):
        k = env.env_cfg.topk
        noise = env.noise_mw
        rx = env.rx_mw
        margin = 10.0 ** (self.params.margin_db / 10.0)
        eta = self.params.eta

        candidates = []
        for i in range(env.env_cfg.n_aps):
            if not obs.valid[i, 0]:
                continue
            j = int(obs.slot_ue[i, 0])
            snr = rx[i, j] / noise
            score = obs.slot_weight[i, 0] * math.log2(1.0 + snr)
            candidates.append((i, j, snr, score))
        candidates.sort(key=lambda c: (-c[3], c[0]))

        admitted: list[tuple[int, int]] = []
        for i, j, snr, _ in candidates:
            gate = snr**eta
            ok = True
            for ai, aj in admitted:
                inr_in = rx[ai, j] / noise        # admitted AP into candidate's UE
                inr_out = rx[i, aj] / noise       # candidate AP into admitted UE
                if gate < margin * inr_in or gate < margin * inr_out:
                    ok = False
                    break
            if ok:
                admitted.append((i, j))

        choices = [k] * env.env_cfg.n_aps
        for i, _ in admitted:
            choices[i] = 0
        return encode_action(choices, k)


class CheckpointPolicy(Policy):
    """Wraps a policy network; greedy argmax by default, else samples softmax."""

    def __init__(self, net: Mlp, greedy: bool = True, name: str = "learned"):
        self.net = net
        self.greedy = greedy
        self.name = name

    @classmethod
    def from_checkpoint(cls, path, greedy: bool = True, name: str = "learned"):
        entries = load_checkpoint(path)
        if "policy" not in entries or not isinstance(entries["policy"], Mlp):
            raise ConfigError(f"checkpoint {path} has no policy network")
        return cls(entries["policy"], greedy=greedy, name=name)

    def act(self, env, obs, rng):
        vec = obs.vector
        if vec.shape[0] != self.net.sizes[0]:
            raise ConfigError(
                f"observation length {vec.shape[0]} does not match the "
                f"network input size {self.net.sizes[0]}"
            )
        logits = self.net.predict(vec[None, :])[0]
        if logits.shape[0] != env.env_cfg.n_actions:
            raise ConfigError(
                f"network has {logits.shape[0]} outputs but the environment "
                f"has {env.env_cfg.n_actions} actions"
            )
        if self.greedy:
            return int(np.argmax(logits))
        return int(rng.choice(logits.shape[0], p=softmax(logits)))


_BUILTIN = {
    "random": RandomPolicy,
    "greedy": GreedyPolicy,
    "tdm": TdmPolicy,
    "itlinq": ItlinqPolicy,
}


def make_policy(spec: str, greedy_ckpt: bool = True,
                itlinq_params: ItlinqParams | None = None) -> Policy:
    """Build a policy from a CLI-style spec: a builtin name or ``ckpt:PATH``."""
    if spec in _BUILTIN:
        if spec == "itlinq":
            return ItlinqPolicy(itlinq_params)
        return _BUILTIN[spec]()
    if spec.startswith("ckpt:"):
        path = spec[len("ckpt:"):]
        if not path:
            raise ConfigError("ckpt: spec needs a path, e.g. ckpt:runs/online/ckpt_final.nnck")
        return CheckpointPolicy.from_checkpoint(path, greedy=greedy_ckpt)
    raise ConfigError(
        f"unknown policy {spec!r}; expected one of {sorted(_BUILTIN)} or ckpt:PATH"
    )
