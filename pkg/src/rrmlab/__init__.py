"""Multi-AP user-scheduling lab: simulation, baselines, online and offline RL."""

from .config import (ConfigError, DatasetConfig, EnvConfig, ExperimentConfig,
                     MetricConfig, OfflineConfig, OnlineConfig, RadioConfig,
                     desk_profile, full_profile, load_config, save_config)
from .env import SchedulingEnv, decode_action, encode_action
from .policies import (CheckpointPolicy, GreedyPolicy, ItlinqParams, ItlinqPolicy,
                       Policy, RandomPolicy, TdmPolicy, make_policy)
from .harness import EvalReport, evaluate_policy, five_percentile_rate, r_score
from .dataset import Dataset, collect, load_dataset, mix, save_dataset
from .sac import DiscreteSac, train_online
from .offline import BcqTrainer, CqlTrainer, IqlTrainer, train_offline
from .rng import named_rng

__version__ = "0.1.0"

__all__ = [
    "BcqTrainer", "CheckpointPolicy", "ConfigError", "CqlTrainer", "Dataset",
    "DatasetConfig", "DiscreteSac", "EnvConfig", "EvalReport", "ExperimentConfig",
    "GreedyPolicy", "IqlTrainer", "ItlinqParams", "ItlinqPolicy", "MetricConfig",
    "OfflineConfig", "OnlineConfig", "Policy", "RadioConfig", "RandomPolicy",
    "SchedulingEnv", "TdmPolicy", "collect", "decode_action", "desk_profile",
    "encode_action", "evaluate_policy", "five_percentile_rate", "full_profile",
    "load_config", "load_dataset", "make_policy", "mix", "named_rng", "r_score",
    "save_config", "save_dataset", "train_offline", "train_online",
]
