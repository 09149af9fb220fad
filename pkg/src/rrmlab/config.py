"""Experiment configuration: typed sections, INI round-trip, dot-path overrides.

A config file is plain INI with sections [env], [radio], [metric],
[online], [offline], [dataset].  Any field can be overridden on the
command line with ``--section.key value``.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    """Invalid configuration value or file."""


@dataclass
class RadioConfig:
    """Radio constants shared by every AP-UE link."""

    carrier_freq_ghz: float = 2.4
    bandwidth_hz: float = 10e6
    tx_power_dbm: float = 24.0
    noise_figure_db: float = 7.0
    shadowing_sigma_db: float = 7.0
    min_prop_distance_m: float = 1.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth_hz must be > 0")
        if self.min_prop_distance_m <= 0:
            raise ConfigError("min_prop_distance_m must be > 0")
        if self.shadowing_sigma_db < 0:
            raise ConfigError("shadowing_sigma_db must be >= 0")


@dataclass
class EnvConfig:
    """Geometry and episode parameters of one environment instance."""

    n_aps: int = 4
    n_ues: int = 16
    episode_len: int = 200
    area_side_m: float = 50.0
    topk: int = 3
    max_speed_mps: float = 1.0
    slot_dt_s: float = 1.0
    min_dist_ap_m: float = 1.0
    min_dist_ue_m: float = 1.0
    pf_alpha: float = 0.05
    reward_lambda: float = 1.0
    pf_floor: float = 1e-3

    def __post_init__(self):
        if self.n_aps < 1 or self.n_ues < 1:
            raise ConfigError("need at least one AP and one UE")
        if self.episode_len < 1:
            raise ConfigError("episode_len must be >= 1")
        if self.topk < 1:
            raise ConfigError("topk must be >= 1")
        if not 0.0 < self.pf_alpha <= 1.0:
            raise ConfigError("pf_alpha must be in (0, 1]")
        if self.reward_lambda < 0:
            raise ConfigError("reward_lambda must be >= 0")
        if self.pf_floor <= 0:
            raise ConfigError("pf_floor must be > 0")

    @property
    def n_actions(self) -> int:
        return (self.topk + 1) ** self.n_aps

    @property
    def obs_dim(self) -> int:
        return self.n_aps * self.topk * 3


@dataclass
class MetricConfig:
    """Figure-of-merit weights and the fixed validation-environment set."""

    mu: float = 1.0
    eta: float = 5.0
    quantile_level: float = 0.05
    pool_p5: bool = True
    validation_seed_start: int = 1000
    n_validation_envs: int = 10

    def __post_init__(self):
        if not 0.0 < self.quantile_level < 1.0:
            raise ConfigError("quantile_level must be in (0, 1)")
        if self.n_validation_envs < 1:
            raise ConfigError("n_validation_envs must be >= 1")

    def validation_seeds(self, n: int | None = None) -> list[int]:
        count = self.n_validation_envs if n is None else n
        return [self.validation_seed_start + i for i in range(count)]


@dataclass
class OnlineConfig:
    """Soft actor-critic training schedule and hyperparameters."""

    epochs: int = 350
    episodes_per_epoch: int = 14
    gamma: float = 0.99
    rho: float = 0.005
    lr: float = 3e-4
    batch_size: int = 64
    replay_capacity: int = 100_000
    updates_per_step: int = 1
    update_after: int = 500
    hidden: tuple[int, ...] = (256, 256)
    entropy_target_ratio: float = 0.3
    reward_scale: float = 1.0
    checkpoint_every: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1]")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError("rho must be in (0, 1]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class OfflineConfig:
    """Offline RL algorithm selection and hyperparameters."""

    algo: str = "iql"
    epochs: int = 30
    updates_per_epoch: int = 10_000
    batch_size: int = 64
    gamma: float = 0.99
    rho: float = 0.005
    lr: float = 3e-4
    bcq_tau: float = 0.3
    cql_alpha: float = 1.0
    iql_expectile: float = 0.7
    iql_beta: float = 3.0
    weight_max: float = 100.0
    hidden: tuple[int, ...] = (256, 256)
    reward_scale: float = 1.0
    checkpoint_every: int = 1

    def __post_init__(self):
        if self.algo not in ("bcq", "cql", "iql"):
            raise ConfigError(f"unknown offline algo {self.algo!r}")
        if not 0.0 <= self.bcq_tau <= 1.0:
            raise ConfigError("bcq_tau must be in [0, 1]")
        if self.cql_alpha < 0:
            raise ConfigError("cql_alpha must be >= 0")
        if not 0.0 < self.iql_expectile < 1.0:
            raise ConfigError("iql_expectile must be in (0, 1)")
        if self.iql_beta <= 0:
            raise ConfigError("iql_beta must be > 0")


@dataclass
class DatasetConfig:
    """Behavior-policy data collection parameters."""

    n_transitions: int = 100_000
    env_seed_start: int = 20_000

    def __post_init__(self):
        if self.n_transitions < 1:
            raise ConfigError("n_transitions must be >= 1")


@dataclass
class ExperimentConfig:
    """All sections of one experiment."""

    env: EnvConfig = field(default_factory=EnvConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    online: OnlineConfig = field(default_factory=OnlineConfig)
    offline: OfflineConfig = field(default_factory=OfflineConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)


_SECTIONS = ("env", "radio", "metric", "online", "offline", "dataset")


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(text: str, target_type):
    text = text.strip()
    if target_type is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    if target_type is str:
        return text
    # tuple[int, ...] hidden-layer sizes
    if text == "":
        return ()
    return tuple(int(v) for v in text.split(","))


def to_ini(cfg: ExperimentConfig) -> str:
    """Render the full config as INI text in a fixed section/key order."""
    out = io.StringIO()
    for section in _SECTIONS:
        out.write(f"[{section}]\n")
        sub = getattr(cfg, section)
        for f in fields(sub):
            out.write(f"{f.name} = {_format_value(getattr(sub, f.name))}\n")
        out.write("\n")
    return out.getvalue()


def from_ini(text: str) -> ExperimentConfig:
    """Parse INI text into an ExperimentConfig; unknown keys are rejected."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config file: {exc}") from exc
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        sub = getattr(cfg, section)
        known = {f.name: f for f in fields(sub)}
        updates = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            updates[key] = _parse_value(raw, _field_type(known[key]))
        setattr(cfg, section, dataclasses.replace(sub, **updates))
    return cfg


def _field_type(f: dataclasses.Field):
    mapping = {"int": int, "float": float, "str": str, "bool": bool}
    return mapping.get(f.type.replace("builtins.", ""), tuple)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return from_ini(fh.read())


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_ini(cfg))


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Apply ``{"env.n_ues": "16", ...}`` dot-path overrides."""
    staged: dict[str, dict] = {}
    for dotted, raw in overrides.items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} is not of the form section.key")
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        sub = getattr(cfg, section)
        known = {f.name: f for f in fields(sub)}
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        staged.setdefault(section, {})[key] = _parse_value(raw, _field_type(known[key]))
    for section, updates in staged.items():
        setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **updates))
    return cfg


def env_digest(env: EnvConfig, radio: RadioConfig) -> str:
    """Short stable digest identifying the environment distribution."""
    h = hashlib.sha256()
    for sub in (env, radio):
        for f in fields(sub):
            h.update(f"{f.name}={_format_value(getattr(sub, f.name))};".encode())
    return h.hexdigest()[:16]


def desk_profile() -> ExperimentConfig:
    """A small configuration that trains in minutes on one core.

    Besides shrinking the geometry and schedule, the profile raises the PF
    floor and shortens the discount horizon: with the tiny episode the
    initial fairness burst (weights pinned at 1/floor until each UE is
    first served) otherwise dominates the return and the critic cannot
    separate episode phases from the phase-free observation.  The IQL
    extraction temperature is softened too; nine actions mean even a
    uniform-random dataset covers the action space, so the stock beta
    would wander further from the behavior policy than intended.
    """
    cfg = ExperimentConfig()
    cfg.env = EnvConfig(n_aps=2, n_ues=6, episode_len=50, topk=2, pf_floor=0.2)
    cfg.online = dataclasses.replace(
        cfg.online, epochs=150, episodes_per_epoch=20, hidden=(64, 64),
        replay_capacity=50_000, reward_scale=0.1, gamma=0.9,
        batch_size=128, lr=1e-4,
    )
    cfg.offline = dataclasses.replace(
        cfg.offline, hidden=(64, 64), reward_scale=0.1, gamma=0.9,
        iql_beta=1.5,
    )
    return cfg


def full_profile() -> ExperimentConfig:
    """Mirrors the published experiment scale (hours to days of compute)."""
    return ExperimentConfig()
