"""Energy management for drones with noisy battery readings.

The Gaussian partially observed battery problem reduces to a belief-mean
MDP, which is solved here by discretized value iteration. DDPG agents on
the raw history or on the belief serve as learned alternatives, and every
policy is evaluated on common random numbers.
"""

from .belief import VarianceSchedule, build_variance_schedule, replay_beliefs
from .ddpg import TrainConfig, train
from .env import evaluate_policy, run_episode, run_swarm
from .model import ConfigError, ModelParams, default_params, load_params
from .solver_vi import BeliefGrid, TablePolicy, value_iteration

__version__ = "0.1.0"

__all__ = [
    "BeliefGrid",
    "ConfigError",
    "ModelParams",
    "TablePolicy",
    "TrainConfig",
    "VarianceSchedule",
    "build_variance_schedule",
    "default_params",
    "evaluate_policy",
    "load_params",
    "replay_beliefs",
    "run_episode",
    "run_swarm",
    "train",
    "value_iteration",
]
