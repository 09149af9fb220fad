"""Episode engine: topology, mobility, PF tracking and the scheduling MDP.

One :class:`SchedulingEnv` instance is one environment: a random AP/UE
layout drawn from its seed, a fixed user association, and a single
episode of ``episode_len`` slots.  Fresh episodes come from fresh
instances with new seeds, which keeps every run exactly reproducible
from ``(seed, fading_seed, action sequence)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    ChannelState,
    draw_fading_power,
    draw_shadowing_db,
    noise_power_mw,
    path_loss_db,
    rsrp_table_dbm,
)
from .config import ConfigError, EnvConfig, RadioConfig
from .rng import named_rng

# Observation feature scaling: SINR in dB clipped to [-20, 40] then mapped
# to [-1, 1]; PF weights on a log10 scale clipped to [-3, 3].
SINR_DB_MIN = -20.0
SINR_DB_MAX = 40.0
LOG_WEIGHT_CLIP = 3.0
PAD_FEATURE = -1.0

MAX_PLACEMENT_ATTEMPTS = 10_000
MAX_REFLECTIONS = 8


@dataclass
class Topology:
    """AP/UE layout and the episode-fixed user association."""

    ap_positions: np.ndarray            # (N, 2)
    ue_positions: np.ndarray            # (M, 2)
    association: np.ndarray             # (M,) serving AP per UE
    user_pools: list[np.ndarray]        # per AP, sorted UE indices
    seed: int


@dataclass
class PfTracker:
    """Smoothed per-UE rates and the proportional-fairness weights 1/max(C~, floor)."""

    tilde_c: np.ndarray
    weights: np.ndarray
    step: int = 0

    @classmethod
    def create(cls, n_ues: int, floor: float) -> "PfTracker":
        tilde = np.zeros(n_ues)
        return cls(tilde_c=tilde, weights=np.full(n_ues, 1.0 / floor), step=0)


def update_pf(tracker: PfTracker, rates: np.ndarray, alpha: float, floor: float) -> PfTracker:
    """One EMA step of the smoothed rates; the first update copies the rates."""
    rates = np.asarray(rates, dtype=np.float64)
    if tracker.step == 0:
        tilde = rates.copy()
    else:
        tilde = alpha * rates + (1.0 - alpha) * tracker.tilde_c
    weights = 1.0 / np.maximum(tilde, floor)
    return PfTracker(tilde_c=tilde, weights=weights, step=tracker.step + 1)


@dataclass
class Observation:
    """Per-AP top-k slots plus the flattened feature vector.

    Slots are sorted by PF weight (descending, UE index breaking ties) and
    padded with invalid entries when a pool is smaller than k.  The vector
    holds one block per AP: ``(sinr, pf) x k`` followed by the k validity
    flags, giving a constant length of ``n_aps * topk * 3``.
    """

    slot_ue: np.ndarray        # (N, k) UE index, -1 when padded
    slot_sinr_db: np.ndarray   # (N, k) all-APs-active SINR, dB
    slot_weight: np.ndarray    # (N, k) PF weight
    valid: np.ndarray          # (N, k) bool
    vector: np.ndarray         # (N*k*3,) float64


@dataclass
class StepResult:
    """Next observation, slot reward and the realized per-UE rates."""

    obs: Observation
    reward: float
    rates: np.ndarray          # (M,) bit/s/Hz, zero for unserved UEs
    done: bool


def encode_action(choices, topk: int) -> int:
    """Pack per-AP choices (0..k-1 = serve that slot, k = OFF) into one index.

    AP 0 is the least-significant digit in base k+1.
    """
    base = topk + 1
    index = 0
    for i, a in enumerate(choices):
        a = int(a)
        if not 0 <= a <= topk:
            raise ValueError(f"AP {i} choice {a} outside [0, {topk}]")
        index += a * base**i
    return index


def decode_action(index: int, topk: int, n_aps: int) -> np.ndarray:
    """Inverse of :func:`encode_action`."""
    base = topk + 1
    index = int(index)
    if not 0 <= index < base**n_aps:
        raise ValueError(f"action index {index} outside [0, {base**n_aps})")
    out = np.empty(n_aps, dtype=np.int64)
    for i in range(n_aps):
        out[i] = index % base
        index //= base
    return out


def compute_reward(weights: np.ndarray, rates: np.ndarray, reward_lambda: float) -> float:
    """Slot reward: sum over UEs of weight^lambda times instantaneous rate."""
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights <= 0):
        raise ValueError("PF weights must be positive")
    return float(np.sum(weights**reward_lambda * np.asarray(rates, dtype=np.float64)))


def associate_users(rsrp_dbm_table: np.ndarray) -> np.ndarray:
    """UE -> AP with the largest RSRP; ties go to the lowest AP index."""
    return np.argmax(rsrp_dbm_table, axis=0)


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)


def generate_topology(env_cfg: EnvConfig, radio_cfg: RadioConfig,
                      seed: int) -> tuple[Topology, ChannelState]:
    """Place APs and UEs, draw the episode's large-scale channel, associate.

    UEs are rejection-sampled against the AP and UE minimum-distance
    constraints.  The returned channel state carries unit fading; the
    environment redraws fading for slot 0.
    """
    place_rng = named_rng(seed, "placement")
    side = env_cfg.area_side_m
    ap_pos = place_rng.uniform(0.0, side, size=(env_cfg.n_aps, 2))

    ue_pos = np.empty((env_cfg.n_ues, 2))
    for j in range(env_cfg.n_ues):
        for attempt in range(MAX_PLACEMENT_ATTEMPTS):
            cand = place_rng.uniform(0.0, side, size=2)
            if np.min(np.linalg.norm(ap_pos - cand, axis=1)) < env_cfg.min_dist_ap_m:
                continue
            if j > 0 and np.min(np.linalg.norm(ue_pos[:j] - cand, axis=1)) < env_cfg.min_dist_ue_m:
                continue
            ue_pos[j] = cand
            break
        else:
            raise ConfigError(
                f"could not place UE {j} after {MAX_PLACEMENT_ATTEMPTS} attempts; "
                "area too small for the minimum-distance constraints"
            )

    dist = _pairwise_dist(ap_pos, ue_pos)
    state = ChannelState(
        pathloss_db=path_loss_db(dist, radio_cfg),
        shadowing_db=draw_shadowing_db(dist.shape, radio_cfg, named_rng(seed, "shadowing")),
        fading_power=np.ones_like(dist),
    )
    association = associate_users(rsrp_table_dbm(state, radio_cfg))
    pools = [np.flatnonzero(association == i) for i in range(env_cfg.n_aps)]
    topo = Topology(ap_positions=ap_pos, ue_positions=ue_pos,
                    association=association, user_pools=pools, seed=seed)
    return topo, state


def _mirror_into(x: float, low: float, high: float) -> float:
    """Reflect a coordinate back into [low, high] (mirror-back rule)."""
    for _ in range(64):
        if x < low:
            x = 2.0 * low - x
        elif x > high:
            x = 2.0 * high - x
        else:
            return x
    return min(max(x, low), high)


def step_mobility(ue_positions: np.ndarray, ap_positions: np.ndarray,
                  cfg: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    """Move every UE by a random heading and speed up to max_speed.

    Boundary crossings mirror the overshoot; a tentative point inside a
    forbidden disk (an AP's or another UE's minimum-distance radius) is
    reflected radially to 2r - d along the same ray.  If a position still
    violates after MAX_REFLECTIONS fixes, the UE keeps its old position.
    UEs move in index order, so earlier UEs' new positions constrain later
    ones; the draw order is fixed to keep episodes reproducible.
    """
    n_ues = len(ue_positions)
    angles = rng.uniform(0.0, 2.0 * math.pi, size=n_ues)
    speeds = rng.uniform(0.0, cfg.max_speed_mps, size=n_ues)
    new_pos = ue_positions.copy()
    side = cfg.area_side_m

    for u in range(n_ues):
        prev = new_pos[u].copy()
        step = speeds[u] * cfg.slot_dt_s
        p = prev + step * np.array([math.cos(angles[u]), math.sin(angles[u])])
        placed = False
        for _ in range(MAX_REFLECTIONS):
            p[0] = _mirror_into(p[0], 0.0, side)
            p[1] = _mirror_into(p[1], 0.0, side)
            center, radius, dist = _deepest_violation(p, u, new_pos, ap_positions, cfg)
            if center is None:
                placed = True
                break
            if dist == 0.0:
                break
            p = center + (p - center) * ((2.0 * radius - dist) / dist)
        if placed:
            new_pos[u] = p
        else:
            new_pos[u] = prev
    return new_pos


def _deepest_violation(p, ue_index, ue_positions, ap_positions, cfg):
    """Most-violated forbidden disk around ``p``: (center, radius, distance)."""
    best = (None, 0.0, 0.0)
    worst_margin = 0.0
    d_ap = np.linalg.norm(ap_positions - p, axis=1)
    for i in np.flatnonzero(d_ap < cfg.min_dist_ap_m):
        margin = d_ap[i] - cfg.min_dist_ap_m
        if margin < worst_margin:
            worst_margin = margin
            best = (ap_positions[i], cfg.min_dist_ap_m, float(d_ap[i]))
    d_ue = np.linalg.norm(ue_positions - p, axis=1)
    d_ue[ue_index] = np.inf
    for j in np.flatnonzero(d_ue < cfg.min_dist_ue_m):
        margin = d_ue[j] - cfg.min_dist_ue_m
        if margin < worst_margin:
            worst_margin = margin
            best = (ue_positions[j], cfg.min_dist_ue_m, float(d_ue[j]))
    return best


class SchedulingEnv:
    """One multi-AP downlink environment and its single episode.

    The observation SINR assumes every AP is transmitting (worst-case
    interference, measurable before the scheduling decision) and includes
    the current fading draw.  Rewards use the PF weights accumulated up to
    the previous slot, so the reward for slot t is causal.
    """

    def __init__(self, env_cfg: EnvConfig, radio_cfg: RadioConfig, seed: int,
                 fading_seed: int | None = None):
        self.env_cfg = env_cfg
        self.radio_cfg = radio_cfg
        self.seed = int(seed)
        self.fading_seed = self.seed if fading_seed is None else int(fading_seed)
        self.noise_mw = noise_power_mw(radio_cfg)
        self.step_count = 0          # lifetime step() calls, useful for offline-purity checks
        self.reset()

    # -- episode lifecycle ------------------------------------------------

    def reset(self) -> Observation:
        cfg = self.env_cfg
        self.topology, self.channel = generate_topology(cfg, self.radio_cfg, self.seed)
        self._fading_rng = named_rng(self.fading_seed, "fading")
        self._mobility_rng = named_rng(self.fading_seed, "mobility")
        self.channel.fading_power = draw_fading_power(
            self.channel.pathloss_db.shape, self._fading_rng)
        self._refresh_rx()
        self.pf = PfTracker.create(cfg.n_ues, cfg.pf_floor)
        self.t = 0
        self._obs = self._build_observation()
        return self._obs

    @property
    def done(self) -> bool:
        return self.t >= self.env_cfg.episode_len

    @property
    def observation(self) -> Observation:
        return self._obs

    @property
    def rx_mw(self) -> np.ndarray:
        """Current-slot linear received power table (fading included)."""
        return self._rx_mw

    def _refresh_rx(self) -> None:
        large_scale = rsrp_table_dbm(self.channel, self.radio_cfg)
        self._rx_mw = 10.0 ** (large_scale / 10.0) * self.channel.fading_power

    # -- MDP interface ----------------------------------------------------

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("episode finished; build a new environment to continue")
        cfg = self.env_cfg
        choices = decode_action(action, cfg.topk, cfg.n_aps)
        obs = self._obs

        serving: list[tuple[int, int]] = []
        for i in range(cfg.n_aps):
            a = int(choices[i])
            if a < cfg.topk and obs.valid[i, a]:
                serving.append((i, int(obs.slot_ue[i, a])))
        active = [i for i, _ in serving]

        rates = np.zeros(cfg.n_ues)
        for i, j in serving:
            interference = sum(self._rx_mw[o, j] for o in active if o != i)
            sinr = self._rx_mw[i, j] / (self.noise_mw + interference)
            rates[j] = math.log2(1.0 + sinr)

        reward = compute_reward(self.pf.weights, rates, cfg.reward_lambda)
        self.pf = update_pf(self.pf, rates, cfg.pf_alpha, cfg.pf_floor)

        # Advance the world: UEs move, path loss follows, fading redraws.
        self.topology.ue_positions = step_mobility(
            self.topology.ue_positions, self.topology.ap_positions, cfg, self._mobility_rng)
        dist = _pairwise_dist(self.topology.ap_positions, self.topology.ue_positions)
        self.channel.pathloss_db = path_loss_db(dist, self.radio_cfg)
        self.channel.fading_power = draw_fading_power(dist.shape, self._fading_rng)
        self._refresh_rx()

        self.t += 1
        self.step_count += 1
        self._obs = self._build_observation()
        return StepResult(obs=self._obs, reward=reward, rates=rates, done=self.done)

    # -- observation ------------------------------------------------------

    def _build_observation(self) -> Observation:
        cfg = self.env_cfg
        n, k = cfg.n_aps, cfg.topk
        weights = self.pf.weights

        total = self._rx_mw.sum(axis=0)
        with np.errstate(divide="ignore"):
            sinr_all = self._rx_mw / (self.noise_mw + (total[None, :] - self._rx_mw))
            sinr_db_all = 10.0 * np.log10(sinr_all)

        slot_ue = np.full((n, k), -1, dtype=np.int64)
        slot_sinr = np.full((n, k), -np.inf)
        slot_weight = np.zeros((n, k))
        valid = np.zeros((n, k), dtype=bool)
        for i in range(n):
            pool = self.topology.user_pools[i]
            if len(pool) == 0:
                continue
            order = np.lexsort((pool, -weights[pool]))
            top = pool[order[:k]]
            m = len(top)
            slot_ue[i, :m] = top
            slot_sinr[i, :m] = sinr_db_all[i, top]
            slot_weight[i, :m] = weights[top]
            valid[i, :m] = True

        vector = np.full(n * k * 3, PAD_FEATURE)
        for i in range(n):
            base = i * k * 3
            for s in range(k):
                if valid[i, s]:
                    sinr_f = (np.clip(slot_sinr[i, s], SINR_DB_MIN, SINR_DB_MAX) - 10.0) / 30.0
                    pf_f = np.clip(math.log10(slot_weight[i, s]), -LOG_WEIGHT_CLIP,
                                   LOG_WEIGHT_CLIP) / LOG_WEIGHT_CLIP
                    vector[base + 2 * s] = sinr_f
                    vector[base + 2 * s + 1] = pf_f
                vector[base + 2 * k + s] = 1.0 if valid[i, s] else 0.0
        return Observation(slot_ue=slot_ue, slot_sinr_db=slot_sinr,
                           slot_weight=slot_weight, valid=valid, vector=vector)
