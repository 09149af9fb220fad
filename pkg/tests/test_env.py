import dataclasses
import math

import numpy as np
import pytest

from rrmlab.config import ConfigError, EnvConfig, RadioConfig
from rrmlab.env import (LOG_WEIGHT_CLIP, PAD_FEATURE, SINR_DB_MAX, SINR_DB_MIN,
                        PfTracker, SchedulingEnv, _mirror_into, associate_users,
                        compute_reward, decode_action, encode_action,
                        generate_topology, step_mobility, update_pf)

RADIO = RadioConfig()


def small_cfg(**kw):
    base = dict(n_aps=2, n_ues=4, episode_len=10, topk=2, area_side_m=30.0)
    base.update(kw)
    return EnvConfig(**base)


# -- action codec ---------------------------------------------------------

def test_action_codec_round_trips_exhaustively():
    topk, n_aps = 3, 4
    seen = set()
    for idx in range((topk + 1) ** n_aps):
        choices = decode_action(idx, topk, n_aps)
        assert encode_action(choices, topk) == idx
        seen.add(tuple(choices))
    assert len(seen) == 256


def test_action_codec_examples():
    # all-OFF is the largest index; AP 0 is the least-significant digit
    assert encode_action([3, 3, 3, 3], topk=3) == 255
    assert encode_action([1, 0, 0, 0], topk=3) == 1
    assert encode_action([0, 1, 0, 0], topk=3) == 4
    assert encode_action([0, 0, 0, 0], topk=3) == 0
    np.testing.assert_array_equal(decode_action(255, 3, 4), [3, 3, 3, 3])
    np.testing.assert_array_equal(decode_action(5, 3, 4), [1, 1, 0, 0])


def test_action_codec_rejects_out_of_range():
    with pytest.raises(ValueError):
        encode_action([4, 0], topk=3)
    with pytest.raises(ValueError):
        encode_action([-1, 0], topk=3)
    with pytest.raises(ValueError):
        decode_action(256, 3, 4)
    with pytest.raises(ValueError):
        decode_action(-1, 3, 4)


# -- proportional fairness -------------------------------------------------

def test_pf_initial_weights_are_inverse_floor():
    pf = PfTracker.create(4, floor=1e-3)
    np.testing.assert_array_equal(pf.tilde_c, np.zeros(4))
    np.testing.assert_array_equal(pf.weights, np.full(4, 1000.0))
    assert pf.step == 0


def test_pf_first_update_copies_rates():
    pf = PfTracker.create(2, floor=1e-3)
    pf = update_pf(pf, np.array([2.0, 0.0]), alpha=0.05, floor=1e-3)
    np.testing.assert_allclose(pf.tilde_c, [2.0, 0.0])
    assert pf.weights[0] == pytest.approx(0.5)
    # a UE still at zero smoothed rate keeps the floored weight
    assert pf.weights[1] == pytest.approx(1000.0)
    assert pf.step == 1


def test_pf_ema_step_known_value():
    # alpha=0.05, previous smoothed rate 1, instantaneous 3 -> 1.1
    pf = PfTracker(tilde_c=np.array([1.0]), weights=np.array([1.0]), step=1)
    pf = update_pf(pf, np.array([3.0]), alpha=0.05, floor=1e-3)
    assert pf.tilde_c[0] == pytest.approx(1.1, abs=1e-15)
    assert pf.weights[0] == pytest.approx(1.0 / 1.1, rel=1e-15)


def test_pf_matches_reference_recursion():
    rng = np.random.default_rng(9)
    alpha, floor = 0.3, 1e-2
    pf = PfTracker.create(3, floor)
    ref = np.zeros(3)
    for t in range(40):
        rates = rng.uniform(0.0, 4.0, size=3)
        pf = update_pf(pf, rates, alpha, floor)
        ref = rates.copy() if t == 0 else alpha * rates + (1 - alpha) * ref
        np.testing.assert_allclose(pf.tilde_c, ref, rtol=1e-12)
        np.testing.assert_allclose(pf.weights, 1.0 / np.maximum(ref, floor), rtol=1e-12)


def test_pf_fixed_point_under_constant_rates():
    pf = PfTracker.create(1, floor=1e-3)
    for _ in range(600):
        pf = update_pf(pf, np.array([2.5]), alpha=0.05, floor=1e-3)
    assert pf.tilde_c[0] == pytest.approx(2.5, rel=1e-9)


# -- reward ----------------------------------------------------------------

def test_reward_weighted_sum():
    # weights (2, 1), rates (1, 1), lambda 1 -> 3
    assert compute_reward(np.array([2.0, 1.0]), np.array([1.0, 1.0]), 1.0) == 3.0


def test_reward_lambda_zero_is_sum_rate():
    w = np.array([7.0, 0.01, 3.0])
    c = np.array([1.5, 2.5, 0.0])
    assert compute_reward(w, c, 0.0) == pytest.approx(4.0)


def test_reward_rejects_nonpositive_weights():
    with pytest.raises(ValueError):
        compute_reward(np.array([0.0, 1.0]), np.array([1.0, 1.0]), 1.0)
    with pytest.raises(ValueError):
        compute_reward(np.array([-1.0, 1.0]), np.array([1.0, 1.0]), 1.0)


# -- association and topology ----------------------------------------------

def test_association_picks_strongest_ap_lowest_on_tie():
    rsrp = np.array([[-70.0, -60.0, -50.0],
                     [-60.0, -60.0, -40.0]])
    np.testing.assert_array_equal(associate_users(rsrp), [1, 0, 1])


def test_topology_respects_constraints_and_partitions_users():
    cfg = small_cfg(n_ues=8)
    topo, state = generate_topology(cfg, RADIO, seed=17)
    side = cfg.area_side_m
    assert topo.ap_positions.shape == (2, 2) and topo.ue_positions.shape == (8, 2)
    assert np.all((topo.ap_positions >= 0) & (topo.ap_positions <= side))
    assert np.all((topo.ue_positions >= 0) & (topo.ue_positions <= side))
    for j, pos in enumerate(topo.ue_positions):
        assert np.min(np.linalg.norm(topo.ap_positions - pos, axis=1)) >= cfg.min_dist_ap_m
        others = np.delete(topo.ue_positions, j, axis=0)
        assert np.min(np.linalg.norm(others - pos, axis=1)) >= cfg.min_dist_ue_m
    gathered = np.sort(np.concatenate(topo.user_pools))
    np.testing.assert_array_equal(gathered, np.arange(8))
    for i, pool in enumerate(topo.user_pools):
        assert np.all(topo.association[pool] == i)
    assert state.pathloss_db.shape == (2, 8)
    np.testing.assert_array_equal(state.fading_power, np.ones((2, 8)))


def test_topology_is_seed_deterministic():
    cfg = small_cfg()
    a, sa = generate_topology(cfg, RADIO, seed=3)
    b, sb = generate_topology(cfg, RADIO, seed=3)
    c, _ = generate_topology(cfg, RADIO, seed=4)
    np.testing.assert_array_equal(a.ue_positions, b.ue_positions)
    np.testing.assert_array_equal(a.association, b.association)
    np.testing.assert_array_equal(sa.shadowing_db, sb.shadowing_db)
    assert not np.array_equal(a.ue_positions, c.ue_positions)


def test_topology_raises_when_area_cannot_fit():
    cfg = small_cfg(n_aps=1, n_ues=1, area_side_m=0.5)
    with pytest.raises(ConfigError):
        generate_topology(cfg, RADIO, seed=0)


# -- mobility ----------------------------------------------------------------

class _ScriptedRng:
    """Stands in for a Generator; replays queued uniform() results."""

    def __init__(self, draws):
        self.draws = list(draws)

    def uniform(self, low, high, size=None):
        return np.asarray(self.draws.pop(0), dtype=np.float64)


def test_mirror_rule_examples():
    # overshooting x = 51 in a 50 m box comes back to 49
    assert _mirror_into(51.0, 0.0, 50.0) == pytest.approx(49.0)
    assert _mirror_into(-3.0, 0.0, 50.0) == pytest.approx(3.0)
    assert _mirror_into(25.0, 0.0, 50.0) == 25.0


def test_mobility_boundary_mirror():
    cfg = small_cfg(n_aps=1, n_ues=1, area_side_m=50.0, max_speed_mps=2.0)
    ap = np.array([[10.0, 10.0]])
    ue = np.array([[49.5, 25.0]])
    rng = _ScriptedRng([[0.0], [1.5]])          # heading +x, speed 1.5
    moved = step_mobility(ue, ap, cfg, rng)
    np.testing.assert_allclose(moved[0], [49.0, 25.0], atol=1e-12)


def test_mobility_radial_reflection_out_of_forbidden_disk():
    # tentative point 0.5 m from an AP with a 1 m exclusion radius is
    # pushed along the same ray to 2r - d = 1.5 m
    cfg = small_cfg(n_aps=1, n_ues=1, area_side_m=50.0, max_speed_mps=2.0)
    ap = np.array([[10.0, 10.0]])
    ue = np.array([[12.0, 10.0]])
    rng = _ScriptedRng([[math.pi], [1.5]])      # heading -x lands at (10.5, 10)
    moved = step_mobility(ue, ap, cfg, rng)
    np.testing.assert_allclose(moved[0], [11.5, 10.0], atol=1e-9)


def test_mobility_preserves_constraints_over_time():
    cfg = small_cfg(n_ues=6)
    topo, _ = generate_topology(cfg, RADIO, seed=5)
    rng = np.random.default_rng(11)
    pos = topo.ue_positions
    for _ in range(100):
        pos = step_mobility(pos, topo.ap_positions, cfg, rng)
        assert np.all((pos >= 0) & (pos <= cfg.area_side_m))
        for j in range(len(pos)):
            assert np.min(np.linalg.norm(topo.ap_positions - pos[j], axis=1)) >= cfg.min_dist_ap_m - 1e-9
            others = np.delete(pos, j, axis=0)
            assert np.min(np.linalg.norm(others - pos[j], axis=1)) >= cfg.min_dist_ue_m - 1e-9


# -- observation --------------------------------------------------------------

def test_observation_vector_layout_and_padding():
    # a 1-UE, 2-AP layout leaves one AP with an empty pool
    cfg = small_cfg(n_ues=1)
    env = SchedulingEnv(cfg, RADIO, seed=2)
    obs = env.observation
    k = cfg.topk
    assert obs.vector.shape == (cfg.n_aps * k * 3,)
    serving = int(env.topology.association[0])
    empty = 1 - serving
    base = empty * k * 3
    np.testing.assert_array_equal(obs.vector[base:base + 2 * k], PAD_FEATURE)
    np.testing.assert_array_equal(obs.vector[base + 2 * k:base + 3 * k], 0.0)
    assert not obs.valid[empty].any()
    assert np.all(obs.slot_ue[empty] == -1)
    # the serving AP has one valid slot and one padded slot (pool size 1 < k)
    assert obs.valid[serving, 0] and not obs.valid[serving, 1]
    sbase = serving * k * 3
    assert obs.vector[sbase + 2 * k] == 1.0 and obs.vector[sbase + 2 * k + 1] == 0.0
    assert obs.vector[sbase + 2] == PAD_FEATURE


def test_observation_sinr_feature_clips_at_40db():
    cfg = small_cfg(n_aps=1, n_ues=1, topk=1)
    env = SchedulingEnv(cfg, RADIO, seed=4)
    env._rx_mw = np.array([[env.noise_mw * 1e4]])     # exactly 40 dB SNR
    at_clip = env._build_observation()
    env._rx_mw = np.array([[env.noise_mw * 1e6]])     # 60 dB clips to the same feature
    beyond = env._build_observation()
    assert at_clip.vector[0] == pytest.approx(1.0, abs=1e-12)
    assert beyond.vector[0] == at_clip.vector[0]
    assert beyond.slot_sinr_db[0, 0] == pytest.approx(60.0, abs=1e-9)


def test_observation_sinr_feature_floor_with_zero_power():
    cfg = small_cfg(n_aps=1, n_ues=1, topk=1)
    env = SchedulingEnv(cfg, RADIO, seed=4)
    env._rx_mw = np.array([[0.0]])
    obs = env._build_observation()
    # -inf dB clips to -20 dB -> feature -1; the validity flag still marks it live
    assert obs.vector[0] == pytest.approx((SINR_DB_MIN - 10.0) / 30.0)
    assert obs.vector[2] == 1.0


def test_observation_weight_feature_saturates_at_initial_floor():
    cfg = small_cfg(n_aps=1, n_ues=1, topk=1, pf_floor=1e-3)
    env = SchedulingEnv(cfg, RADIO, seed=4)
    # weight 1000 -> log10 = 3 -> clipped feature exactly 1
    assert env.pf.weights[0] == 1000.0
    assert env.observation.vector[1] == pytest.approx(1.0, abs=1e-12)


def test_observation_orders_slots_by_weight_then_index():
    cfg = small_cfg(n_aps=1, n_ues=3, topk=2, pf_floor=1e-3)
    env = SchedulingEnv(cfg, RADIO, seed=8)
    # fresh episode: all weights tie, so the two lowest UE indices fill the slots
    np.testing.assert_array_equal(env.observation.slot_ue[0], [0, 1])
    result = env.step(encode_action([0], cfg.topk))      # serve UE 0
    assert result.rates[0] > cfg.pf_floor                # premise for the reorder
    # UE 0's weight fell below the untouched ties, so it leaves the top-k
    np.testing.assert_array_equal(env.observation.slot_ue[0], [1, 2])


# -- environment dynamics ------------------------------------------------------

def test_step_reward_uses_pre_update_weights_and_single_ap_rate():
    cfg = small_cfg(n_ues=1)
    env = SchedulingEnv(cfg, RADIO, seed=2)
    serving = int(env.topology.association[0])
    rx = env.rx_mw.copy()
    w0 = env.pf.weights.copy()
    choices = np.full(cfg.n_aps, cfg.topk)
    choices[serving] = 0
    result = env.step(encode_action(choices, cfg.topk))
    want_rate = math.log2(1.0 + rx[serving, 0] / env.noise_mw)
    assert result.rates[0] == pytest.approx(want_rate, rel=1e-12)
    assert result.reward == pytest.approx(w0[0] * want_rate, rel=1e-12)
    # smoothed rate copied on the first update
    assert env.pf.tilde_c[0] == pytest.approx(want_rate, rel=1e-12)


def test_step_all_off_gives_zero_reward_and_rates():
    cfg = small_cfg()
    env = SchedulingEnv(cfg, RADIO, seed=6)
    result = env.step(cfg.n_actions - 1)
    assert result.reward == 0.0
    np.testing.assert_array_equal(result.rates, np.zeros(cfg.n_ues))


def test_step_unserved_ues_get_zero_rate():
    cfg = small_cfg(n_ues=6)
    env = SchedulingEnv(cfg, RADIO, seed=6)
    obs = env.observation
    result = env.step(0)  # every AP serves its top slot if valid
    served = {int(obs.slot_ue[i, 0]) for i in range(cfg.n_aps) if obs.valid[i, 0]}
    for j in range(cfg.n_ues):
        if j not in served:
            assert result.rates[j] == 0.0


def test_invalid_slot_selection_equals_off():
    # AP pools have one user here, so slot index 1 is padded; choosing it
    # must reproduce the OFF trajectory exactly
    cfg = small_cfg(n_ues=1, episode_len=6)
    env_a = SchedulingEnv(cfg, RADIO, seed=12)
    env_b = SchedulingEnv(cfg, RADIO, seed=12)
    serving = int(env_a.topology.association[0])
    idle = 1 - serving
    choices_a = np.zeros(cfg.n_aps, dtype=int)
    choices_b = np.zeros(cfg.n_aps, dtype=int)
    choices_a[serving] = choices_b[serving] = 0
    choices_a[idle] = 1            # padded slot
    choices_b[idle] = cfg.topk     # explicit OFF
    for _ in range(cfg.episode_len):
        ra = env_a.step(encode_action(choices_a, cfg.topk))
        rb = env_b.step(encode_action(choices_b, cfg.topk))
        assert ra.reward == rb.reward
        np.testing.assert_array_equal(ra.rates, rb.rates)
        np.testing.assert_array_equal(ra.obs.vector, rb.obs.vector)


def test_episode_terminates_and_refuses_further_steps():
    cfg = small_cfg(episode_len=3)
    env = SchedulingEnv(cfg, RADIO, seed=1)
    for t in range(3):
        result = env.step(0)
    assert result.done and env.done
    assert env.step_count == 3
    with pytest.raises(RuntimeError):
        env.step(0)
    env.reset()
    assert not env.done and env.t == 0
    assert env.step_count == 3       # lifetime counter survives reset


def test_full_episode_is_deterministic():
    cfg = small_cfg()
    rng = np.random.default_rng(0)
    actions = rng.integers(0, cfg.n_actions, size=cfg.episode_len)
    traces = []
    for _ in range(2):
        env = SchedulingEnv(cfg, RADIO, seed=33)
        rewards, vectors = [], []
        for a in actions:
            res = env.step(int(a))
            rewards.append(res.reward)
            vectors.append(res.obs.vector)
        traces.append((np.array(rewards), np.stack(vectors)))
    np.testing.assert_array_equal(traces[0][0], traces[1][0])
    np.testing.assert_array_equal(traces[0][1], traces[1][1])


def test_fading_seed_decouples_channel_from_layout():
    cfg = small_cfg()
    a = SchedulingEnv(cfg, RADIO, seed=7, fading_seed=100)
    b = SchedulingEnv(cfg, RADIO, seed=7, fading_seed=101)
    np.testing.assert_array_equal(a.topology.ue_positions, b.topology.ue_positions)
    assert not np.array_equal(a.channel.fading_power, b.channel.fading_power)
