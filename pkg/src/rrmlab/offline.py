"""Offline RL on fixed transition datasets: discrete BCQ, CQL and IQL.

All three trainers consume minibatches sampled from a dataset and never
touch an environment; evaluation between epochs runs on separate
validation environments.  One epoch is ``updates_per_epoch`` minibatch
updates, matching the online notion of an epoch by gradient count rather
than by data passes.
"""
from __future__ import annotations

import os
import time

import numpy as np

from .config import ConfigError, ExperimentConfig, OfflineConfig
from .dataset import Dataset
from .harness import curve_row, evaluate_policy, write_learning_curve_csv
from .nn import Adam, Mlp, log_softmax, logsumexp, soft_update, softmax
from .policies import CheckpointPolicy
from .rng import named_rng
from . import nn as nn_io


def expectile_loss(u: np.ndarray, tau: float) -> np.ndarray:
    """Asymmetric squared error |tau - 1(u < 0)| * u^2, elementwise."""
    weight = np.where(u < 0.0, 1.0 - tau, tau)
    return weight * u * u


def _scaled(batch: dict, cfg: OfflineConfig):
    obs = batch["obs"]
    acts = batch["actions"].astype(np.int64)
    r = batch["rewards"] * cfg.reward_scale
    nobs = batch["next_obs"]
    not_done = 1.0 - batch["dones"]
    return obs, acts, r, nobs, not_done


class OfflineTrainer:
    """Shared twin-critic scaffolding; subclasses define update and greedy act."""

    algo = "base"

    def __init__(self, obs_dim: int, n_actions: int, cfg: OfflineConfig, seed: int):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        init = named_rng(seed, self.algo, "init")
        sizes = [obs_dim, *cfg.hidden, n_actions]
        self.q1 = Mlp.create(sizes, init)
        self.q2 = Mlp.create(sizes, init)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.q1_opt = Adam(self.q1.params(), lr=cfg.lr)
        self.q2_opt = Adam(self.q2.params(), lr=cfg.lr)
        self.update_count = 0
        self._extra_init(init)

    def _extra_init(self, init: np.random.Generator) -> None:
        pass

    def _critic_step(self, obs, acts, y) -> float:
        """MSE update of both critics at the dataset actions."""
        n = obs.shape[0]
        rows = np.arange(n)
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
        return float(np.mean(td1**2) + np.mean(td2**2))

    def _finish_update(self) -> None:
        soft_update(self.q1_target, self.q1, self.cfg.rho)
        soft_update(self.q2_target, self.q2, self.cfg.rho)
        self.update_count += 1

    def update(self, batch: dict) -> dict:
        raise NotImplementedError

    def greedy_action(self, obs_vec: np.ndarray) -> int:
        raise NotImplementedError

    def policy(self):
        return _TrainerPolicy(self)

    def checkpoint_entries(self) -> dict:
        return {"q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target}

    def train_epoch(self, ds: Dataset, rng: np.random.Generator) -> dict:
        """One epoch = updates_per_epoch sampled minibatches; returns mean losses."""
        sums: dict = {}
        for _ in range(self.cfg.updates_per_epoch):
            idx = rng.integers(0, ds.count, size=self.cfg.batch_size)
            batch = {"obs": ds.obs[idx].astype(np.float64),
                     "actions": ds.actions[idx].astype(np.int64),
                     "rewards": ds.rewards[idx].astype(np.float64),
                     "next_obs": ds.next_obs[idx].astype(np.float64),
                     "dones": ds.dones[idx].astype(np.float64)}
            losses = self.update(batch)
            for k, v in losses.items():
                sums[k] = sums.get(k, 0.0) + v
        return {k: v / self.cfg.updates_per_epoch for k, v in sums.items()}


class _TrainerPolicy:
    """Greedy evaluation adapter for a trainer."""

    def __init__(self, trainer: OfflineTrainer):
        self.trainer = trainer
        self.name = trainer.algo

    def reset(self) -> None:
        pass

    def act(self, env, obs, rng) -> int:
        return self.trainer.greedy_action(obs.vector)


class BcqTrainer(OfflineTrainer):
    """Discrete batch-constrained Q-learning.

    A behavior-cloning head restricts the bootstrap: actions whose cloned
    probability falls below ``bcq_tau`` times the per-state maximum are
    excluded from the argmax.  Selection uses the online q1 over the
    eligible set; evaluation of the selected action uses the minimum of
    the target critics, so at tau = 0 the critic update reduces exactly to
    double DQN with twin targets.
    """

    algo = "bcq"

    def _extra_init(self, init):
        sizes = [self.obs_dim, *self.cfg.hidden, self.n_actions]
        self.behavior = Mlp.create(sizes, init)
        self.behavior_opt = Adam(self.behavior.params(), lr=self.cfg.lr)

    def _eligible(self, obs: np.ndarray) -> np.ndarray:
        probs = softmax(self.behavior.predict(obs))
        return probs >= self.cfg.bcq_tau * probs.max(axis=1, keepdims=True)

    def update(self, batch):
        obs, acts, r, nobs, not_done = _scaled(batch, self.cfg)
        n = obs.shape[0]
        rows = np.arange(n)

        # Behavior cloning: cross-entropy on the dataset actions.
        blogits, bc = self.behavior.forward(obs)
        blogp = log_softmax(blogits)
        bc_loss = float(-blogp[rows, acts].mean())
        dlogits = (np.exp(blogp) - _onehot(acts, self.n_actions)) / n
        self.behavior_opt.step(self.behavior.backward(bc, dlogits)[0])

        elig = self._eligible(nobs)
        q1n = self.q1.predict(nobs)
        a_star = np.argmax(np.where(elig, q1n, -np.inf), axis=1)
        qt = np.minimum(self.q1_target.predict(nobs),
                        self.q2_target.predict(nobs))[rows, a_star]
        y = r + self.cfg.gamma * not_done * qt
        critic_loss = self._critic_step(obs, acts, y)
        self._finish_update()
        return {"critic_loss": critic_loss, "bc_loss": bc_loss}

    def greedy_action(self, obs_vec):
        obs = obs_vec[None, :]
        elig = self._eligible(obs)[0]
        q = np.minimum(self.q1.predict(obs), self.q2.predict(obs))[0]
        return int(np.argmax(np.where(elig, q, -np.inf)))

    def checkpoint_entries(self):
        entries = super().checkpoint_entries()
        entries["behavior"] = self.behavior
        return entries


class CqlTrainer(OfflineTrainer):
    """Conservative Q-learning: double-DQN TD plus a logsumexp penalty.

    The penalty alpha * (logsumexp_a Q(s, a) - Q(s, a_data)) pushes down
    out-of-dataset action values; alpha = 0 recovers plain double DQN.
    """

    algo = "cql"

    def update(self, batch):
        obs, acts, r, nobs, not_done = _scaled(batch, self.cfg)
        n = obs.shape[0]
        rows = np.arange(n)
        alpha = self.cfg.cql_alpha

        a_star = np.argmax(self.q1.predict(nobs), axis=1)
        qt = np.minimum(self.q1_target.predict(nobs),
                        self.q2_target.predict(nobs))[rows, a_star]
        y = r + self.cfg.gamma * not_done * qt

        onehot = _onehot(acts, self.n_actions)
        critic_loss = 0.0
        penalty_mean = 0.0
        for net, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            q_out, cache = net.forward(obs)
            td = q_out[rows, acts] - y
            penalty = logsumexp(q_out, axis=1) - q_out[rows, acts]
            dq = np.zeros_like(q_out)
            dq[rows, acts] = 2.0 * td / n
            dq += alpha * (softmax(q_out) - onehot) / n
            opt.step(net.backward(cache, dq)[0])
            critic_loss += float(np.mean(td**2))
            penalty_mean += float(penalty.mean())
        self._finish_update()
        return {"critic_loss": critic_loss, "cql_penalty": penalty_mean / 2.0}

    def greedy_action(self, obs_vec):
        obs = obs_vec[None, :]
        q = np.minimum(self.q1.predict(obs), self.q2.predict(obs))[0]
        return int(np.argmax(q))


class IqlTrainer(OfflineTrainer):
    """Implicit Q-learning with advantage-weighted policy extraction.

    The value net regresses an expectile of the min target critic at the
    dataset actions; critics bootstrap through V(s'); the policy head is
    trained by cross-entropy weighted by clip(exp(beta * advantage)).
    """

    algo = "iql"

    def _extra_init(self, init):
        self.v = Mlp.create([self.obs_dim, *self.cfg.hidden, 1], init)
        self.policy_net = Mlp.create([self.obs_dim, *self.cfg.hidden, self.n_actions], init)
        self.v_opt = Adam(self.v.params(), lr=self.cfg.lr)
        self.policy_opt = Adam(self.policy_net.params(), lr=self.cfg.lr)

    def update(self, batch):
        obs, acts, r, nobs, not_done = _scaled(batch, self.cfg)
        n = obs.shape[0]
        rows = np.arange(n)
        cfg = self.cfg

        qt = np.minimum(self.q1_target.predict(obs),
                        self.q2_target.predict(obs))[rows, acts]

        # Value net: expectile regression toward the target critic.
        v_out, vc = self.v.forward(obs)
        v_pred = v_out[:, 0]
        u = qt - v_pred
        v_loss = float(expectile_loss(u, cfg.iql_expectile).mean())
        dv = (np.where(u < 0.0, 1.0 - cfg.iql_expectile, cfg.iql_expectile)
              * 2.0 * u * (-1.0) / n)
        self.v_opt.step(self.v.backward(vc, dv[:, None])[0])

        # Critics: bootstrap through the fresh value estimate.
        y = r + cfg.gamma * not_done * self.v.predict(nobs)[:, 0]
        critic_loss = self._critic_step(obs, acts, y)

        # Policy: advantage-weighted behavioral cloning.
        adv = qt - self.v.predict(obs)[:, 0]
        w = np.exp(np.minimum(cfg.iql_beta * adv, np.log(cfg.weight_max)))
        plogits, pc = self.policy_net.forward(obs)
        plogp = log_softmax(plogits)
        p_loss = float((w * -plogp[rows, acts]).mean())
        dlogits = w[:, None] * (np.exp(plogp) - _onehot(acts, self.n_actions)) / n
        self.policy_opt.step(self.policy_net.backward(pc, dlogits)[0])

        self._finish_update()
        return {"critic_loss": critic_loss, "value_loss": v_loss, "policy_loss": p_loss}

    def greedy_action(self, obs_vec):
        logits = self.policy_net.predict(obs_vec[None, :])[0]
        return int(np.argmax(logits))

    def checkpoint_entries(self):
        entries = super().checkpoint_entries()
        entries["v"] = self.v
        entries["policy"] = self.policy_net
        return entries

    def greedy_policy(self, name: str = "iql") -> CheckpointPolicy:
        return CheckpointPolicy(self.policy_net, greedy=True, name=name)


def _onehot(acts: np.ndarray, n_actions: int) -> np.ndarray:
    out = np.zeros((acts.shape[0], n_actions))
    out[np.arange(acts.shape[0]), acts] = 1.0
    return out


_TRAINERS = {"bcq": BcqTrainer, "cql": CqlTrainer, "iql": IqlTrainer}


def make_trainer(algo: str, obs_dim: int, n_actions: int, cfg: OfflineConfig,
                 seed: int) -> OfflineTrainer:
    if algo not in _TRAINERS:
        raise ConfigError(f"unknown offline algorithm {algo!r}; expected one of "
                          f"{sorted(_TRAINERS)}")
    return _TRAINERS[algo](obs_dim, n_actions, cfg, seed)


def train_offline(ds: Dataset, cfg: ExperimentConfig, run_dir, seed: int,
                  algo: str | None = None, log=None) -> tuple[OfflineTrainer, list[dict]]:
    """Train on a fixed dataset, evaluating once per epoch.

    The dataset must match the configured environment (digest, observation
    length, action count).  Writes the same artifacts as online training.
    A zero-epoch run performs no updates and evaluates the fresh networks.
    """
    if ds.obs_dim != cfg.env.obs_dim or ds.n_actions != cfg.env.n_actions:
        raise ConfigError(
            f"dataset geometry (obs_dim={ds.obs_dim}, n_actions={ds.n_actions}) "
            f"does not match the configured environment "
            f"(obs_dim={cfg.env.obs_dim}, n_actions={cfg.env.n_actions})"
        )
    run_dir = os.fspath(run_dir)
    os.makedirs(run_dir, exist_ok=True)
    algo = algo or cfg.offline.algo
    trainer = make_trainer(algo, cfg.env.obs_dim, cfg.env.n_actions, cfg.offline, seed)
    batch_rng = named_rng(seed, algo, "batch")
    curve: list[dict] = []
    start = time.monotonic()
    for epoch in range(1, cfg.offline.epochs + 1):
        losses = trainer.train_epoch(ds, batch_rng)
        report = evaluate_policy(trainer.policy(), cfg.env, cfg.radio, cfg.metric)
        curve.append(curve_row(epoch, report))
        write_learning_curve_csv(curve, os.path.join(run_dir, "learning_curve.csv"))
        if epoch % cfg.offline.checkpoint_every == 0:
            nn_io.save_checkpoint(os.path.join(run_dir, f"ckpt_epoch_{epoch:04d}.nnck"),
                                  trainer.checkpoint_entries())
        if log is not None:
            loss_txt = " ".join(f"{k}={v:.4f}" for k, v in losses.items())
            log(f"epoch {epoch}/{cfg.offline.epochs} R={report.score:.4f} {loss_txt} "
                f"[{time.monotonic() - start:.0f}s]")
    nn_io.save_checkpoint(os.path.join(run_dir, "ckpt_final.nnck"),
                          trainer.checkpoint_entries())
    return trainer, curve
