"""Battery-constrained federated edge learning simulator and DDPG allocator."""

__version__ = "0.1.0"

from .simcore import (AllocationAction, DeviceProfile, DeviceState, RoundOutcome,
                      SystemConfig, evaluate_round)
from .environment import FeelEnv, FleetSpec, Observation, StepResult, sample_fleet
from .neuro import AdamConfig, MlpNet, adam_step, init_params, soft_update
from .ddpg import AgentConfig, AgentPolicy, DdpgAgent, ReplayBuffer, Transition
from .baselines import even_bandwidth_wrapper, rollout, static_policy
from .fedavg import ClientDataset, GlobalModel, aggregate, global_loss, local_update

__all__ = [
    "AllocationAction", "DeviceProfile", "DeviceState", "RoundOutcome", "SystemConfig",
    "evaluate_round", "FeelEnv", "FleetSpec", "Observation", "StepResult", "sample_fleet",
    "AdamConfig", "MlpNet", "adam_step", "init_params", "soft_update",
    "AgentConfig", "AgentPolicy", "DdpgAgent", "ReplayBuffer", "Transition",
    "even_bandwidth_wrapper", "rollout", "static_policy",
    "ClientDataset", "GlobalModel", "aggregate", "global_loss", "local_update",
    "__version__",
]
