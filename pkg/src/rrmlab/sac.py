"""Discrete soft actor-critic and the online training loop.

The discrete-action form takes exact expectations over the action
distribution instead of sampling: the critic target is the soft state
value under the current policy, and the actor loss is the expected
temperature-weighted log-probability minus the twin-critic minimum.  The
temperature is learned to track a target entropy of
``entropy_target_ratio * log(n_actions)``.
"""
from __future__ import annotations

import os
import time

import numpy as np

from .config import ExperimentConfig, OnlineConfig
from .env import SchedulingEnv
from .harness import curve_row, evaluate_policy, write_learning_curve_csv
from .nn import Adam, Mlp, log_softmax, soft_update, softmax
from .policies import CheckpointPolicy
from .rng import named_rng
from . import nn as nn_io


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = int(capacity)
        self.obs = np.empty((capacity, obs_dim))
        self.actions = np.empty(capacity, dtype=np.int64)
        self.rewards = np.empty(capacity)
        self.next_obs = np.empty((capacity, obs_dim))
        self.dones = np.empty(capacity)
        self.size = 0
        self.pos = 0

    def __len__(self) -> int:
        return self.size

    def push(self, obs, action, reward, next_obs, done) -> None:
        i = self.pos
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = 1.0 if done else 0.0
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> dict:
        idx = rng.integers(0, self.size, size=batch_size)
        return {"obs": self.obs[idx], "actions": self.actions[idx],
                "rewards": self.rewards[idx], "next_obs": self.next_obs[idx],
                "dones": self.dones[idx]}


class DiscreteSac:
    """Twin-critic discrete SAC with a learned temperature."""

    def __init__(self, obs_dim: int, n_actions: int, cfg: OnlineConfig, seed: int):
        self.cfg = cfg
        self.n_actions = n_actions
        init = named_rng(seed, "sac-init")
        sizes = [obs_dim, *cfg.hidden, n_actions]
        self.policy = Mlp.create(sizes, init)
        self.q1 = Mlp.create(sizes, init)
        self.q2 = Mlp.create(sizes, init)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_temp = np.zeros(1)
        self.entropy_target = cfg.entropy_target_ratio * np.log(n_actions)
        self.policy_opt = Adam(self.policy.params(), lr=cfg.lr)
        self.q1_opt = Adam(self.q1.params(), lr=cfg.lr)
        self.q2_opt = Adam(self.q2.params(), lr=cfg.lr)
        self.temp_opt = Adam([self.log_temp], lr=cfg.lr)
        self.update_count = 0

    @property
    def temperature(self) -> float:
        return float(np.exp(self.log_temp[0]))

    def act(self, obs_vec: np.ndarray, greedy: bool, rng: np.random.Generator) -> int:
        logits = self.policy.predict(obs_vec[None, :])[0]
        if greedy:
            return int(np.argmax(logits))
        return int(rng.choice(self.n_actions, p=softmax(logits)))

    def critic_targets(self, batch: dict) -> np.ndarray:
        """Soft Bellman target under the current policy and target critics."""
        cfg = self.cfg
        nobs = batch["next_obs"]
        logits = self.policy.predict(nobs)
        logp = log_softmax(logits)
        p = np.exp(logp)
        qmin = np.minimum(self.q1_target.predict(nobs), self.q2_target.predict(nobs))
        v_next = np.sum(p * (qmin - self.temperature * logp), axis=1)
        r = batch["rewards"] * cfg.reward_scale
        return r + cfg.gamma * (1.0 - batch["dones"]) * v_next

    def update(self, batch: dict) -> dict:
        cfg = self.cfg
        obs = batch["obs"]
        acts = batch["actions"].astype(np.int64)
        n = obs.shape[0]
        rows = np.arange(n)
        y = self.critic_targets(batch)

        # Critics: MSE at the taken actions.
        q1_out, c1 = self.q1.forward(obs)
        q2_out, c2 = self.q2.forward(obs)
        td1 = q1_out[rows, acts] - y
        td2 = q2_out[rows, acts] - y
        dq1 = np.zeros_like(q1_out)
        dq1[rows, acts] = 2.0 * td1 / n
        dq2 = np.zeros_like(q2_out)
        dq2[rows, acts] = 2.0 * td2 / n
        self.q1_opt.step(self.q1.backward(c1, dq1)[0])
        self.q2_opt.step(self.q2.backward(c2, dq2)[0])

        # Actor: expected temperature-weighted log-prob minus min-Q.
        logits, cp = self.policy.forward(obs)
        logp = log_softmax(logits)
        p = np.exp(logp)
        qmin = np.minimum(self.q1.predict(obs), self.q2.predict(obs))
        temp = self.temperature
        g = temp * logp - qmin
        f_row = np.sum(p * g, axis=1, keepdims=True)
        dlogits = p * (g - f_row) / n
        self.policy_opt.step(self.policy.backward(cp, dlogits)[0])
        actor_loss = float(f_row.mean())

        # Temperature: pull the policy entropy toward the target.
        entropy = -np.sum(p * logp, axis=1)
        self.temp_opt.step([np.array([float(entropy.mean() - self.entropy_target)])])

        soft_update(self.q1_target, self.q1, cfg.rho)
        soft_update(self.q2_target, self.q2, cfg.rho)
        self.update_count += 1
        return {"critic_loss": float(np.mean(td1**2) + np.mean(td2**2)),
                "actor_loss": actor_loss,
                "entropy": float(entropy.mean()),
                "temperature": temp}

    def greedy_policy(self, name: str = "sac") -> CheckpointPolicy:
        return CheckpointPolicy(self.policy, greedy=True, name=name)

    def checkpoint_entries(self) -> dict:
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target,
                "log_temp": self.log_temp.copy()}


def _episode_seed(rng: np.random.Generator, cfg: ExperimentConfig) -> int:
    """Training env seed clear of the validation seed block."""
    lo = cfg.metric.validation_seed_start
    hi = lo + cfg.metric.n_validation_envs
    while True:
        s = int(rng.integers(0, 2**31 - 1))
        if not lo <= s < hi:
            return s


def train_online(cfg: ExperimentConfig, run_dir, seed: int,
                 log=None) -> tuple[DiscreteSac, list[dict]]:
    """Train SAC, evaluating on the validation envs once per epoch.

    Writes ``learning_curve.csv`` plus ``ckpt_epoch_XXXX.nnck`` files (per
    ``checkpoint_every``) and ``ckpt_final.nnck`` under ``run_dir``.
    Returns the agent and the curve rows.
    """
    run_dir = os.fspath(run_dir)
    os.makedirs(run_dir, exist_ok=True)
    ocfg = cfg.online
    agent = DiscreteSac(cfg.env.obs_dim, cfg.env.n_actions, ocfg, seed)
    replay = ReplayBuffer(ocfg.replay_capacity, cfg.env.obs_dim)
    explore_rng = named_rng(seed, "sac-explore")
    batch_rng = named_rng(seed, "sac-batch")
    seed_rng = named_rng(seed, "sac-episodes")
    warmup = max(ocfg.update_after, ocfg.batch_size)

    curve: list[dict] = []
    start = time.monotonic()
    for epoch in range(1, ocfg.epochs + 1):
        for _ in range(ocfg.episodes_per_epoch):
            env = SchedulingEnv(cfg.env, cfg.radio, _episode_seed(seed_rng, cfg))
            obs = env.observation
            while not env.done:
                a = agent.act(obs.vector, greedy=False, rng=explore_rng)
                res = env.step(a)
                replay.push(obs.vector, a, res.reward, res.obs.vector, res.done)
                obs = res.obs
                if len(replay) >= warmup:
                    for _ in range(ocfg.updates_per_step):
                        agent.update(replay.sample(batch_rng, ocfg.batch_size))
        report = evaluate_policy(agent.greedy_policy(), cfg.env, cfg.radio, cfg.metric)
        curve.append(curve_row(epoch, report))
        write_learning_curve_csv(curve, os.path.join(run_dir, "learning_curve.csv"))
        if epoch % ocfg.checkpoint_every == 0:
            nn_io.save_checkpoint(os.path.join(run_dir, f"ckpt_epoch_{epoch:04d}.nnck"),
                                  agent.checkpoint_entries())
        if log is not None:
            log(f"epoch {epoch}/{ocfg.epochs} R={report.score:.4f} "
                f"temp={agent.temperature:.4f} "
                f"[{time.monotonic() - start:.0f}s]")
    nn_io.save_checkpoint(os.path.join(run_dir, "ckpt_final.nnck"),
                          agent.checkpoint_entries())
    return agent, curve
