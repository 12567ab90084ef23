"""Non-learning comparison policies and a shared evaluation rollout."""

from __future__ import annotations

import numpy as np

from .environment import BATTERY_EXHAUSTED, FeelEnv
from .simcore import AllocationAction, SystemConfig


class Policy:
    """Anything with a name and act(observation) -> AllocationAction."""

    name = "policy"

    def act(self, obs) -> AllocationAction:
        raise NotImplementedError


class StaticPolicy(Policy):
    """Same frequency-scale factor for every device every round, even bandwidth."""

    def __init__(self, factor: float, config: SystemConfig):
        if not 0.0 < factor <= 1.0:
            raise ValueError("static adjustment factor must lie in (0, 1]")
        self.factor = factor
        self.name = f"static_{factor:g}"
        m = config.num_devices
        self._eta = np.full(m, factor)
        self._bandwidth = np.full(m, config.total_bandwidth / m)

    def act(self, obs) -> AllocationAction:
        return AllocationAction(freq_scale=self._eta.copy(), bandwidth=self._bandwidth.copy())


class EvenBandwidthPolicy(Policy):
    """Delegate the frequency scales to an inner policy, split bandwidth evenly."""

    def __init__(self, inner: Policy, config: SystemConfig):
        self.inner = inner
        self.name = f"even_bw({inner.name})"
        m = config.num_devices
        self._bandwidth = np.full(m, config.total_bandwidth / m)

    def act(self, obs) -> AllocationAction:
        action = self.inner.act(obs)
        return AllocationAction(freq_scale=action.freq_scale, bandwidth=self._bandwidth.copy())


def static_policy(factor: float, config: SystemConfig) -> StaticPolicy:
    return StaticPolicy(factor, config)


def even_bandwidth_wrapper(inner: Policy, config: SystemConfig) -> EvenBandwidthPolicy:
    return EvenBandwidthPolicy(inner, config)


def rollout(policy: Policy, env: FeelEnv) -> dict:
    """Run one episode on a freshly reset env and summarize it.

    Per-round means cover paid rounds only; an unpaid terminating attempt
    contributes nothing."""
    obs = env.observe()
    ep_return = 0.0
    costs, latencies, energies = [], [], []
    while not env.done:
        res = env.step(policy.act(obs))
        ep_return += res.reward
        if res.reason != BATTERY_EXHAUSTED:
            costs.append(res.outcome.instant_cost)
            latencies.append(res.outcome.system_latency)
            energies.append(res.outcome.total_energy)
        obs = res.observation
    return {
        "episode_return": ep_return,
        "rounds_completed": env.rounds_completed(),
        "mean_cost": float(np.mean(costs)) if costs else 0.0,
        "mean_latency": float(np.mean(latencies)) if latencies else 0.0,
        "mean_energy": float(np.mean(energies)) if energies else 0.0,
    }
