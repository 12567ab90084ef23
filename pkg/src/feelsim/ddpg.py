"""Deterministic policy-gradient agent for the joint allocation problem.

Four networks (main/target actor and critic), a uniform ring replay buffer
and Gaussian exploration on the actor's head pre-activations. The actor
emits one sigmoid head (frequency scales) and one softmax head (bandwidth
fractions); decoding maps those onto the feasible action set exactly, so
every emitted action is valid by construction regardless of the parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .environment import BATTERY_EXHAUSTED, FeelEnv, Observation
from .neuro import AdamConfig, MlpNet, adam_step, init_params, soft_update
from .rng import substream
from .simcore import AllocationAction, SystemConfig

CHECKPOINT_META = "metadata.json"
NET_FILES = ("actor_main", "actor_target", "critic_main", "critic_target")


class InsufficientSamples(RuntimeError):
    """Raised when the replay buffer holds fewer transitions than one batch."""


@dataclass
class Transition:
    state: np.ndarray       # observation vector
    action: np.ndarray      # raw head outputs (sigmoid values, softmax fractions)
    reward: float           # already scaled for the learner
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer sampled uniformly with replacement."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim))
        self.dones = np.zeros(self.capacity)
        self._next = 0
        self._size = 0

    def push(self, tr: Transition):
        i = self._next
        self.states[i] = tr.state
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.next_states[i] = tr.next_state
        self.dones[i] = 1.0 if tr.done else 0.0
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator):
        return rng.integers(0, self._size, size=batch_size)

    def gather(self, idx):
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.dones[idx])

    def __len__(self):
        return self._size


@dataclass
class NoiseSchedule:
    """Exploration sigma decays linearly over the first part of training."""

    sigma_start: float = 0.3
    sigma_end: float = 0.01
    decay_fraction: float = 0.6

    def sigma(self, episode: int, total_episodes: int) -> float:
        horizon = max(1, int(self.decay_fraction * total_episodes))
        frac = min(1.0, episode / horizon)
        return self.sigma_start + frac * (self.sigma_end - self.sigma_start)


@dataclass
class AgentConfig:
    gamma: float = 0.999
    tau: float = 1e-3
    batch_size: int = 128
    buffer_capacity: int = 10_000
    actor_lr: float = 1e-6
    critic_lr: float = 1e-2
    updates_per_episode: int = 50
    train_every_step: bool = False   # alternative placement: update inside the loop
    reward_scale: float | None = None  # learner-side divisor; None -> max_rounds
    even_bandwidth: bool = False     # ablation: bandwidth forced to an even split
    actor_hidden: tuple = (64, 256)
    critic_hidden: tuple = (30, 30)
    noise: NoiseSchedule = field(default_factory=NoiseSchedule)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be >= 1")


def project_bandwidth(fractions, total: float, floor: float) -> np.ndarray:
    """Map nonnegative fractions summing to 1 onto bandwidths that respect the
    per-device floor and add up to `total` exactly.

    Entries below the floor are raised to it and the remainder is rescaled,
    repeating until no entry violates the floor."""
    b = np.asarray(fractions, dtype=np.float64) * total
    fixed = np.zeros(b.shape, dtype=bool)
    for _ in range(len(b)):
        low = (b < floor) & ~fixed
        if not low.any():
            break
        b[low] = floor
        fixed |= low
        free = ~fixed
        remaining = total - floor * fixed.sum()
        b[free] *= remaining / b[free].sum()
    return b


class DdpgAgent:
    """Actor-critic learner producing allocation actions from observations."""

    def __init__(self, system_config: SystemConfig, config: AgentConfig | None = None,
                 seed: int = 0):
        self.system = system_config
        self.config = config or AgentConfig()
        m = system_config.num_devices
        self.num_devices = m
        self.obs_dim = 1 + 3 * m
        self.action_dim = 2 * m

        self.main_actor = MlpNet(self.obs_dim, self.config.actor_hidden,
                                 [(m, "sigmoid"), (m, "softmax")])
        self.main_critic = MlpNet(self.obs_dim + self.action_dim,
                                  self.config.critic_hidden, [(1, "identity")])
        init_params(self.main_actor, substream(seed, "actor_init").integers(2**63))
        init_params(self.main_critic, substream(seed, "critic_init").integers(2**63))
        self.target_actor = self.main_actor.clone()
        self.target_critic = self.main_critic.clone()

        self.buffer = ReplayBuffer(self.config.buffer_capacity, self.obs_dim, self.action_dim)
        self._noise_rng = substream(seed, "noise")
        self._replay_rng = substream(seed, "replay")
        self._actor_adam = AdamConfig(self.config.actor_lr)
        self._critic_adam = AdamConfig(self.config.critic_lr)
        self.sigma = self.config.noise.sigma_start
        self.episodes_trained = 0

    # ---- acting ----

    def select_action(self, obs: Observation, explore: bool = False):
        """Return (raw head outputs, decoded AllocationAction)."""
        vec = obs.as_vector() if isinstance(obs, Observation) else np.asarray(obs)
        z = self.main_actor.head_inputs(vec)
        if explore and self.sigma > 0:
            z = z + self._noise_rng.normal(0.0, self.sigma, size=z.shape)
        raw = self.main_actor.apply_heads(z)
        if self.config.even_bandwidth:
            raw = raw.copy()
            raw[self.num_devices:] = 1.0 / self.num_devices
        return raw, self.decode_action(raw)

    def decode_action(self, raw) -> AllocationAction:
        m = self.num_devices
        sig = np.asarray(raw[:m], dtype=np.float64)
        frac = np.asarray(raw[m:], dtype=np.float64)
        eta = self.system.eta_min + sig * (1.0 - self.system.eta_min)
        bw = project_bandwidth(frac, self.system.total_bandwidth, self.system.bandwidth_floor)
        return AllocationAction(freq_scale=eta, bandwidth=bw)

    # ---- learning ----

    def store(self, tr: Transition):
        self.buffer.push(tr)

    def compute_targets(self, next_states, rewards, dones) -> np.ndarray:
        """Bootstrapped value targets from the target networks only; the
        bootstrap term is masked on terminal transitions."""
        a_next = self.target_actor.forward(next_states)
        if self.config.even_bandwidth:
            a_next[:, self.num_devices:] = 1.0 / self.num_devices
        q_next = self.target_critic.forward(np.hstack([next_states, a_next]))[:, 0]
        return rewards + self.config.gamma * (1.0 - dones) * q_next

    def critic_update(self, states, actions, rewards, next_states, dones):
        """One Adam step on the mean squared Bellman error. Returns the
        pre-update loss and gradient norm."""
        y = self.compute_targets(next_states, rewards, dones)
        x = np.hstack([states, actions])
        q = self.main_critic.forward(x)[:, 0]
        err = q - y
        loss = float(np.mean(err ** 2))
        n = len(err)
        grad_out = (2.0 * err / n)[:, None]
        pgrad, _ = self.main_critic.backward(x, grad_out)
        adam_step(self.main_critic, pgrad, self._critic_adam)
        return loss, float(np.linalg.norm(pgrad))

    def actor_update(self, states):
        """One Adam ascent step on the mean critic value of the actor's own
        actions. Returns the pre-update objective and gradient norm."""
        a = self.main_actor.forward(states)
        if self.config.even_bandwidth:
            a[:, self.num_devices:] = 1.0 / self.num_devices
        x = np.hstack([states, a])
        q = self.main_critic.forward(x)[:, 0]
        n = len(q)
        ones = np.full((n, 1), 1.0 / n)
        _, xgrad = self.main_critic.backward(x, ones)
        dq_da = xgrad[:, self.obs_dim:]
        if self.config.even_bandwidth:
            dq_da = dq_da.copy()
            dq_da[:, self.num_devices:] = 0.0  # the even split is not learnable
        pgrad, _ = self.main_actor.backward(states, dq_da)
        adam_step(self.main_actor, -pgrad, self._actor_adam)  # gradient ascent
        return float(np.mean(q)), float(np.linalg.norm(pgrad))

    def train_step(self) -> dict:
        """Sample a batch, update both main networks, soft-update both targets."""
        if len(self.buffer) < self.config.batch_size:
            raise InsufficientSamples(
                f"buffer holds {len(self.buffer)} < batch_size {self.config.batch_size}")
        idx = self.buffer.sample_indices(self.config.batch_size, self._replay_rng)
        states, actions, rewards, next_states, dones = self.buffer.gather(idx)
        critic_loss, critic_gnorm = self.critic_update(states, actions, rewards,
                                                       next_states, dones)
        actor_obj, actor_gnorm = self.actor_update(states)
        soft_update(self.target_critic, self.main_critic, self.config.tau)
        soft_update(self.target_actor, self.main_actor, self.config.tau)
        return {"critic_loss": critic_loss, "actor_objective": actor_obj,
                "critic_grad_norm": critic_gnorm, "actor_grad_norm": actor_gnorm}

    def run_episode(self, env: FeelEnv, train: bool = True, explore: bool = True) -> dict:
        """Roll one episode on a freshly reset environment; optionally train.

        With the default placement all updates happen after the episode ends;
        `train_every_step` moves one update inside the interaction loop."""
        scale = self.config.reward_scale or float(env.config.max_rounds)
        obs = env.observe()
        ep_return = 0.0
        costs, latencies, energies = [], [], []
        diag = {}
        while not env.done:
            raw, action = self.select_action(obs, explore=explore)
            res = env.step(action)
            ep_return += res.reward
            if res.reason != BATTERY_EXHAUSTED:
                costs.append(res.outcome.instant_cost)
                latencies.append(res.outcome.system_latency)
                energies.append(res.outcome.total_energy)
            self.store(Transition(state=obs.as_vector(), action=raw,
                                  reward=res.reward / scale,
                                  next_state=res.observation.as_vector(),
                                  done=res.done))
            obs = res.observation
            if train and self.config.train_every_step:
                diag = self._try_train() or diag
        if train and not self.config.train_every_step:
            for _ in range(self.config.updates_per_episode):
                diag = self._try_train() or diag
        if train:
            self.episodes_trained += 1
        return {
            "episode_return": ep_return,
            "rounds_completed": env.rounds_completed(),
            "mean_cost": float(np.mean(costs)) if costs else 0.0,
            "mean_latency": float(np.mean(latencies)) if latencies else 0.0,
            "mean_energy": float(np.mean(energies)) if energies else 0.0,
            "critic_loss": diag.get("critic_loss", math.nan),
            "actor_objective": diag.get("actor_objective", math.nan),
            "noise_sigma": self.sigma if explore else 0.0,
        }

    def _try_train(self):
        try:
            return self.train_step()
        except InsufficientSamples:
            return None

    # ---- persistence ----

    def save(self, directory) -> None:
        """Checkpoint: four parameter blobs plus JSON metadata (no buffer)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        nets = (self.main_actor, self.target_actor, self.main_critic, self.target_critic)
        for name, net in zip(NET_FILES, nets):
            net.save(directory / name)
        meta = {
            "format": 1,
            "episodes_trained": self.episodes_trained,
            "noise_sigma": self.sigma,
            "num_devices": self.num_devices,
            "even_bandwidth": self.config.even_bandwidth,
        }
        (directory / CHECKPOINT_META).write_text(json.dumps(meta, indent=1) + "\n")

    @classmethod
    def load(cls, directory, system_config: SystemConfig,
             config: AgentConfig | None = None, seed: int = 0) -> "DdpgAgent":
        directory = Path(directory)
        meta = json.loads((directory / CHECKPOINT_META).read_text())
        if meta["num_devices"] != system_config.num_devices:
            raise ValueError(
                f"checkpoint was trained for {meta['num_devices']} devices, "
                f"config asks for {system_config.num_devices}")
        agent = cls(system_config, config, seed=seed)
        nets = [MlpNet.load(directory / name) for name in NET_FILES]
        for current, loaded in zip((agent.main_actor, agent.target_actor,
                                    agent.main_critic, agent.target_critic), nets):
            if not current.same_architecture(loaded):
                raise ValueError("checkpoint architecture does not match the agent config")
        agent.main_actor, agent.target_actor, agent.main_critic, agent.target_critic = nets
        agent.episodes_trained = meta["episodes_trained"]
        agent.sigma = meta["noise_sigma"]
        return agent


class AgentPolicy:
    """Expose a (frozen) agent through the deterministic policy interface."""

    def __init__(self, agent: DdpgAgent, name: str = "ddpg"):
        self.agent = agent
        self.name = name

    def act(self, obs) -> AllocationAction:
        return self.agent.select_action(obs, explore=False)[1]
