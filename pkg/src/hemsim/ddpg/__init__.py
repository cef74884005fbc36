"""Deep deterministic policy gradient agent, built on hand-rolled numpy MLPs."""

from .nets import Adam, Mlp, soft_update
from .noise import GaussianNoise, OrnsteinUhlenbeckNoise, make_noise
from .buffer import FeatureNorm, ReplayBuffer
from .agent import (
    DdpgAgent,
    MultiSeedResult,
    SeedResult,
    TrainResult,
    evaluate,
    load_checkpoint,
    multi_seed,
    reward_weights,
    sample_episode,
    save_checkpoint,
    select_best_by_eval,
    train,
    write_train_log,
)

__all__ = [
    "Adam",
    "DdpgAgent",
    "FeatureNorm",
    "GaussianNoise",
    "Mlp",
    "MultiSeedResult",
    "OrnsteinUhlenbeckNoise",
    "ReplayBuffer",
    "SeedResult",
    "TrainResult",
    "evaluate",
    "load_checkpoint",
    "make_noise",
    "multi_seed",
    "reward_weights",
    "sample_episode",
    "save_checkpoint",
    "select_best_by_eval",
    "soft_update",
    "train",
    "write_train_log",
]
