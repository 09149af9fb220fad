import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from rrmlab.config import ExperimentConfig, OnlineConfig, desk_profile
from rrmlab.harness import read_learning_curve_csv
from rrmlab.nn import Adam, load_checkpoint, log_softmax, softmax
from rrmlab.policies import CheckpointPolicy
from rrmlab.rng import named_rng
from rrmlab.sac import DiscreteSac, ReplayBuffer, _episode_seed, train_online


class GradRecorder(Adam):
    """Records the gradients passed to step() and leaves parameters alone."""

    def step(self, grads):
        self.seen = [np.array(g, dtype=np.float64, copy=True) for g in grads]


def tiny_agent(obs_dim=3, n_actions=4, hidden=(), seed=0, **over):
    cfg = OnlineConfig(hidden=tuple(hidden), **over)
    return DiscreteSac(obs_dim, n_actions, cfg, seed=seed)


def random_batch(rng, n, obs_dim, n_actions, done=None):
    return {
        "obs": rng.normal(size=(n, obs_dim)),
        "actions": rng.integers(0, n_actions, size=n),
        "rewards": rng.normal(size=n),
        "next_obs": rng.normal(size=(n, obs_dim)),
        "dones": np.zeros(n) if done is None else np.full(n, float(done)),
    }


# -- replay buffer -----------------------------------------------------------

def test_replay_buffer_ring_semantics():
    buf = ReplayBuffer(capacity=5, obs_dim=2)
    for i in range(7):
        buf.push(np.full(2, i), i, float(i), np.full(2, i + 100), i % 2 == 0)
    assert len(buf) == 5
    # slots 0 and 1 now hold transitions 5 and 6
    assert buf.actions[0] == 5 and buf.actions[1] == 6
    assert buf.actions[2] == 2
    assert buf.pos == 2


def test_replay_buffer_sampling():
    buf = ReplayBuffer(capacity=10, obs_dim=3)
    for i in range(4):
        buf.push(np.zeros(3), i, 0.0, np.zeros(3), False)
    batch = buf.sample(np.random.default_rng(0), 32)
    assert batch["obs"].shape == (32, 3)
    assert np.all(batch["actions"] < 4)          # never reads unwritten slots


# -- agent basics ---------------------------------------------------------------

def test_agent_initialization():
    agent = tiny_agent(obs_dim=6, n_actions=9, hidden=(16,))
    assert agent.policy.sizes == [6, 16, 9]
    assert agent.temperature == 1.0
    assert agent.entropy_target == pytest.approx(0.3 * math.log(9))
    for target, online in ((agent.q1_target, agent.q1), (agent.q2_target, agent.q2)):
        for t, o in zip(target.params(), online.params()):
            np.testing.assert_array_equal(t, o)


def test_act_greedy_is_argmax_and_sampling_is_uniform_for_flat_logits():
    agent = tiny_agent(obs_dim=3, n_actions=4)
    agent.policy.weights[0][:] = 0.0
    agent.policy.biases[0][:] = [0.0, 0.0, 3.0, 0.0]
    obs = np.ones(3)
    assert agent.act(obs, greedy=True, rng=None) == 2

    agent.policy.biases[0][:] = 0.0              # flat logits now
    rng = np.random.default_rng(1)
    counts = np.zeros(4)
    for _ in range(4000):
        counts[agent.act(obs, greedy=False, rng=rng)] += 1
    assert stats.chisquare(counts).pvalue > 0.01


# -- critic targets ----------------------------------------------------------------

def test_terminal_target_is_the_scaled_reward():
    agent = tiny_agent(reward_scale=0.25)
    rng = np.random.default_rng(2)
    batch = random_batch(rng, 8, 3, 4, done=1)
    np.testing.assert_allclose(agent.critic_targets(batch),
                               batch["rewards"] * 0.25, rtol=1e-12)


def test_bootstrap_target_matches_manual_soft_value():
    agent = tiny_agent(gamma=0.9, reward_scale=1.0)
    agent.log_temp[:] = np.log(0.5)
    rng = np.random.default_rng(3)
    batch = random_batch(rng, 6, 3, 4, done=0)
    logits = agent.policy.predict(batch["next_obs"])
    p = softmax(logits)
    qmin = np.minimum(agent.q1_target.predict(batch["next_obs"]),
                      agent.q2_target.predict(batch["next_obs"]))
    v = np.sum(p * (qmin - 0.5 * np.log(p)), axis=1)
    np.testing.assert_allclose(agent.critic_targets(batch),
                               batch["rewards"] + 0.9 * v, rtol=1e-10)


# -- gradient paths -----------------------------------------------------------------

def test_actor_gradient_formula_and_finite_difference():
    # zero policy weights make the logits equal the bias vector, so the
    # recorded bias gradient exposes d/dlogits summed over the batch
    agent = tiny_agent(obs_dim=3, n_actions=5)
    agent.policy.weights[0][:] = 0.0
    bias = np.array([0.3, -0.2, 0.1, 0.0, 0.5])
    agent.policy.biases[0][:] = bias
    temp = 0.7
    agent.log_temp[:] = np.log(temp)
    agent.q1_opt.lr = agent.q2_opt.lr = agent.temp_opt.lr = 0.0
    recorder = GradRecorder(agent.policy.params())
    agent.policy_opt = recorder

    rng = np.random.default_rng(4)
    batch = random_batch(rng, 6, 3, 5)
    n = 6
    qmin = np.minimum(agent.q1.predict(batch["obs"]), agent.q2.predict(batch["obs"]))
    agent.update(batch)
    db = recorder.seen[1]

    # closed form: p * (g - sum(p g)) / n summed over samples
    logp = log_softmax(np.tile(bias, (n, 1)))
    p = np.exp(logp)
    g = temp * logp - qmin
    dlogits = p * (g - np.sum(p * g, axis=1, keepdims=True)) / n
    np.testing.assert_allclose(db, dlogits.sum(axis=0), rtol=1e-10)

    # and the closed form itself against central differences of the objective
    def objective(b):
        lp = log_softmax(np.tile(b, (n, 1)))
        pb = np.exp(lp)
        return float(np.mean(np.sum(pb * (temp * lp - qmin), axis=1)))

    eps = 1e-6
    for a in range(5):
        b_hi, b_lo = bias.copy(), bias.copy()
        b_hi[a] += eps
        b_lo[a] -= eps
        fd = (objective(b_hi) - objective(b_lo)) / (2 * eps)
        assert fd == pytest.approx(db[a], rel=1e-4, abs=1e-9)


def test_temperature_gradient_is_entropy_gap():
    agent = tiny_agent(obs_dim=3, n_actions=4)
    agent.q1_opt.lr = agent.q2_opt.lr = agent.policy_opt.lr = 0.0
    recorder = GradRecorder([agent.log_temp])
    agent.temp_opt = recorder
    rng = np.random.default_rng(5)
    batch = random_batch(rng, 8, 3, 4)
    logits = agent.policy.predict(batch["obs"])
    p = softmax(logits)
    entropy = -np.sum(p * np.log(p), axis=1)
    agent.update(batch)
    want = entropy.mean() - 0.3 * math.log(4)
    assert recorder.seen[0][0] == pytest.approx(want, rel=1e-10)


def test_critic_regression_descends_on_a_fixed_batch():
    agent = tiny_agent(obs_dim=3, n_actions=4, hidden=(16,), lr=3e-3)
    agent.policy_opt.lr = 0.0
    agent.temp_opt.lr = 0.0
    rng = np.random.default_rng(6)
    batch = random_batch(rng, 16, 3, 4)
    first = agent.update(batch)["critic_loss"]
    for _ in range(300):
        last = agent.update(batch)["critic_loss"]
    assert last < 0.1 * first


def test_target_networks_track_the_critics():
    agent = tiny_agent(rho=1.0)
    rng = np.random.default_rng(7)
    agent.update(random_batch(rng, 8, 3, 4))
    for t, o in zip(agent.q1_target.params(), agent.q1.params()):
        np.testing.assert_array_equal(t, o)

    slow = tiny_agent(rho=0.005, seed=1)
    before = [p.copy() for p in slow.q1_target.params()]
    slow.update(random_batch(rng, 8, 3, 4))
    moved = any(not np.array_equal(b, t)
                for b, t in zip(before, slow.q1_target.params()))
    diverged = any(not np.array_equal(t, o)
                   for t, o in zip(slow.q1_target.params(), slow.q1.params()))
    assert moved and diverged


def test_update_bookkeeping():
    agent = tiny_agent()
    rng = np.random.default_rng(8)
    losses = agent.update(random_batch(rng, 8, 3, 4))
    assert set(losses) == {"critic_loss", "actor_loss", "entropy", "temperature"}
    assert agent.update_count == 1
    assert agent.temperature > 0.0


# -- training loop ------------------------------------------------------------------

def tiny_experiment():
    cfg = desk_profile()
    cfg.env = dataclasses.replace(cfg.env, n_ues=4, episode_len=10)
    cfg.online = dataclasses.replace(
        cfg.online, epochs=2, episodes_per_epoch=1, hidden=(8,),
        update_after=8, batch_size=8, replay_capacity=500, checkpoint_every=1)
    cfg.metric = dataclasses.replace(cfg.metric, n_validation_envs=2)
    return cfg


def test_episode_seeds_avoid_the_validation_block():
    cfg = ExperimentConfig()
    rng = named_rng(0, "sac-episodes")
    lo = cfg.metric.validation_seed_start
    hi = lo + cfg.metric.n_validation_envs
    for _ in range(1000):
        s = _episode_seed(rng, cfg)
        assert not lo <= s < hi


def test_train_online_writes_artifacts(tmp_path):
    cfg = tiny_experiment()
    agent, curve = train_online(cfg, tmp_path, seed=0)
    assert agent.update_count > 0
    assert len(curve) == 2
    assert (tmp_path / "learning_curve.csv").exists()
    assert (tmp_path / "ckpt_epoch_0001.nnck").exists()
    assert (tmp_path / "ckpt_epoch_0002.nnck").exists()
    assert (tmp_path / "ckpt_final.nnck").exists()
    rows = read_learning_curve_csv(tmp_path / "learning_curve.csv")
    assert [r["epoch"] for r in rows] == [1, 2]
    assert rows[0]["r_score_mean"] == pytest.approx(curve[0]["r_score_mean"])


def test_train_online_is_deterministic(tmp_path):
    cfg = tiny_experiment()
    cfg.online = dataclasses.replace(cfg.online, epochs=1)
    train_online(cfg, tmp_path / "a", seed=5)
    train_online(cfg, tmp_path / "b", seed=5)
    a = (tmp_path / "a" / "learning_curve.csv").read_bytes()
    b = (tmp_path / "b" / "learning_curve.csv").read_bytes()
    assert a == b
    ca = (tmp_path / "a" / "ckpt_final.nnck").read_bytes()
    cb = (tmp_path / "b" / "ckpt_final.nnck").read_bytes()
    assert ca == cb
    train_online(cfg, tmp_path / "c", seed=6)
    assert (tmp_path / "c" / "ckpt_final.nnck").read_bytes() != ca


def test_checkpoint_reload_reproduces_greedy_actions(tmp_path):
    cfg = tiny_experiment()
    agent, _ = train_online(cfg, tmp_path, seed=1)
    entries = load_checkpoint(tmp_path / "ckpt_final.nnck")
    reloaded = CheckpointPolicy(entries["policy"], greedy=True, name="reloaded")
    from rrmlab.env import SchedulingEnv
    env = SchedulingEnv(cfg.env, cfg.radio, seed=123)
    live = agent.greedy_policy()
    while not env.done:
        a1 = live.act(env, env.observation, None)
        a2 = reloaded.act(env, env.observation, None)
        assert a1 == a2
        env.step(a1)
    assert set(entries) == {"policy", "q1", "q2", "q1_target", "q2_target", "log_temp"}
