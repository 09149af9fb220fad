"""Radio propagation: path loss, shadowing, Rayleigh fading, RSRP and SINR.

All link tables are (n_aps, n_ues) arrays.  Powers follow the dBm/mW
convention: ``rx_dbm = tx_power_dbm - pathloss_db - shadowing_db`` and
linear power includes the per-slot fading gain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RadioConfig

THERMAL_NOISE_DBM_PER_HZ = -174.0


@dataclass
class ChannelState:
    """Per-link gains: large-scale terms plus the current fast-fading draw.

    ``pathloss_db`` tracks UE mobility, ``shadowing_db`` is frozen for the
    episode, ``fading_power`` is a unit-mean exponential redrawn every slot
    (squared Rayleigh amplitude).
    """

    pathloss_db: np.ndarray
    shadowing_db: np.ndarray
    fading_power: np.ndarray

    def __post_init__(self):
        if not (self.pathloss_db.shape == self.shadowing_db.shape == self.fading_power.shape):
            raise ValueError("channel tables must share one (n_aps, n_ues) shape")


def path_loss_db(distance_m, cfg: RadioConfig):
    """Indoor-hotspot LOS path loss; distances clamp at min_prop_distance_m.

    Accepts scalars or arrays.
    """
    d = np.maximum(np.asarray(distance_m, dtype=np.float64), cfg.min_prop_distance_m)
    return 32.8 + 16.9 * np.log10(d) + 20.0 * np.log10(cfg.carrier_freq_ghz)


def draw_shadowing_db(shape, cfg: RadioConfig, rng: np.random.Generator) -> np.ndarray:
    """Episode-start log-normal shadowing in dB: Normal(0, sigma^2) per link."""
    if cfg.shadowing_sigma_db == 0.0:
        return np.zeros(shape)
    return rng.normal(0.0, cfg.shadowing_sigma_db, size=shape)


def draw_fading_power(shape, rng: np.random.Generator) -> np.ndarray:
    """Per-slot squared-Rayleigh power gains: Exponential with mean 1."""
    return rng.exponential(1.0, size=shape)


def noise_power_mw(cfg: RadioConfig) -> float:
    """Receiver noise floor over the full bandwidth, in mW."""
    noise_dbm = THERMAL_NOISE_DBM_PER_HZ + 10.0 * np.log10(cfg.bandwidth_hz) + cfg.noise_figure_db
    return float(10.0 ** (noise_dbm / 10.0))


def rsrp_table_dbm(state: ChannelState, cfg: RadioConfig) -> np.ndarray:
    """Large-scale received power per link; fading excluded so association
    is stable within an episode."""
    return cfg.tx_power_dbm - state.pathloss_db - state.shadowing_db


def rsrp_dbm(ap: int, ue: int, state: ChannelState, cfg: RadioConfig) -> float:
    """RSRP of one link in dBm."""
    n_aps, n_ues = state.pathloss_db.shape
    if not (0 <= ap < n_aps and 0 <= ue < n_ues):
        raise IndexError(f"link ({ap}, {ue}) outside {n_aps}x{n_ues} table")
    return float(cfg.tx_power_dbm - state.pathloss_db[ap, ue] - state.shadowing_db[ap, ue])


def rx_power_mw(state: ChannelState, cfg: RadioConfig) -> np.ndarray:
    """Instantaneous linear received power per link (fading included), mW."""
    large_scale = rsrp_table_dbm(state, cfg)
    return 10.0 ** (large_scale / 10.0) * state.fading_power


def compute_sinr(ue: int, serving_ap: int, active_aps, state: ChannelState,
                 cfg: RadioConfig) -> float:
    """Linear SINR of one scheduled link given the set of transmitting APs."""
    active = set(int(a) for a in active_aps)
    if serving_ap not in active:
        raise ValueError(f"serving AP {serving_ap} is not in the active set {sorted(active)}")
    rx = rx_power_mw(state, cfg)
    signal = rx[serving_ap, ue]
    interference = sum(rx[i, ue] for i in active if i != serving_ap)
    return float(signal / (noise_power_mw(cfg) + interference))
