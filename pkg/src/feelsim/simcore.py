"""Physical cost model of one federated-edge-learning round.

All quantities are SI: frequencies in Hz, times in seconds, energies in
joules, bandwidth in Hz, model size in bits, powers in watts. Every
function here is pure and stateless; the episodic dynamics live in
:mod:`feelsim.environment`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class DeviceProfile:
    """Immutable physical constants of one edge device.

    cycles_per_sample : CPU cycles needed to process one training sample
    dataset_size      : local training samples per epoch
    chip_coeff        : CPU energy coefficient, J*s^2/cycle^3
    tx_power          : uplink transmit power, W
    battery_capacity  : total battery energy, J
    base_freq_init    : base CPU frequency at the first round, Hz
    """

    id: int
    cycles_per_sample: float
    dataset_size: float
    chip_coeff: float
    tx_power: float
    battery_capacity: float
    base_freq_init: float

    def __post_init__(self):
        for name in ("cycles_per_sample", "dataset_size", "chip_coeff",
                     "tx_power", "battery_capacity", "base_freq_init"):
            if getattr(self, name) <= 0:
                raise ValueError(f"DeviceProfile.{name} must be > 0")


@dataclass
class DeviceState:
    """Mutable per-round state of one device."""

    battery_remaining: float  # J
    base_freq: float          # Hz, current (possibly jittered) base frequency
    channel_gain_pow: float   # |h|^2, dimensionless power gain

    def __post_init__(self):
        if self.battery_remaining < 0:
            raise ValueError("battery_remaining must be >= 0")
        if self.base_freq <= 0 or self.channel_gain_pow <= 0:
            raise ValueError("base_freq and channel_gain_pow must be > 0")


@dataclass
class AllocationAction:
    """Joint per-round decision: CPU frequency scaling and uplink bandwidth.

    freq_scale[m] multiplies device m's base frequency; bandwidth[m] is the
    uplink bandwidth in Hz assigned to device m.
    """

    freq_scale: list
    bandwidth: list

    def __len__(self):
        return len(self.freq_scale)


@dataclass
class SystemConfig:
    """System-wide constants shared by the cost model and the environment."""

    num_devices: int = 20
    max_rounds: int = 1000
    local_epochs: int = 5
    total_bandwidth: float = 5e6      # Hz
    model_size_bits: float = 8e7      # 10 MB of weights
    noise_power: float = 1e-9         # W
    lambda_tradeoff: float = 0.5      # 1 -> pure latency, 0 -> pure energy
    eta_min: float = 0.05             # lower bound of the frequency scale
    bandwidth_floor: float | None = None  # Hz per device; default 1e-3 of total
    freq_jitter_range: tuple = (0.8, 1.2)
    channel_gain_floor: float = 1e-3
    channel_clip: float = 5.0
    reward_cost_scale: float = 1.0    # kappa in reward = round - kappa * cost
    epoch_energy_factor: bool = True  # charge training energy once per epoch

    def __post_init__(self):
        if self.num_devices < 1 or self.max_rounds < 1 or self.local_epochs < 1:
            raise ValueError("num_devices, max_rounds and local_epochs must be >= 1")
        if self.total_bandwidth <= 0 or self.model_size_bits <= 0 or self.noise_power <= 0:
            raise ValueError("total_bandwidth, model_size_bits, noise_power must be > 0")
        if not 0.0 <= self.lambda_tradeoff <= 1.0:
            raise ValueError("lambda_tradeoff must lie in [0, 1]")
        if not 0.0 < self.eta_min <= 1.0:
            raise ValueError("eta_min must lie in (0, 1]")
        if self.bandwidth_floor is None:
            self.bandwidth_floor = 1e-3 * self.total_bandwidth
        if self.bandwidth_floor <= 0:
            raise ValueError("bandwidth_floor must be > 0")
        if self.num_devices * self.bandwidth_floor >= self.total_bandwidth:
            raise ValueError("per-device bandwidth floor exceeds the total bandwidth")
        lo, hi = self.freq_jitter_range
        if not 0 < lo <= hi:
            raise ValueError("freq_jitter_range must satisfy 0 < lo <= hi")


@dataclass
class RoundOutcome:
    """Every latency/energy quantity of one evaluated round.

    Per-device lists are indexed like the fleet. `bottleneck` is the lowest
    index among devices attaining the system latency.
    """

    t_local: list
    t_up: list
    t_total: list
    e_local: list
    e_up: list
    e_total: list
    system_latency: float   # max_m t_total[m], s
    total_energy: float     # sum_m e_total[m], J
    instant_cost: float     # lambda * latency + (1 - lambda) * energy
    bottleneck: int


def local_latency(profile: DeviceProfile, state: DeviceState, eta: float, epochs: int) -> float:
    """Seconds spent on `epochs` local training passes at scaled frequency."""
    if eta <= 0:
        raise ValueError("frequency scale eta must be > 0")
    if state.base_freq <= 0:
        raise ValueError("base_freq must be > 0")
    return epochs * profile.cycles_per_sample * profile.dataset_size / (eta * state.base_freq)


def tx_rate(bandwidth: float, tx_power: float, channel_gain_pow: float, noise_power: float) -> float:
    """Uplink Shannon rate in bits/s over the allocated bandwidth."""
    if bandwidth <= 0 or noise_power <= 0:
        raise ValueError("bandwidth and noise_power must be > 0")
    if tx_power <= 0 or channel_gain_pow < 0:
        raise ValueError("tx_power must be > 0 and channel_gain_pow >= 0")
    return bandwidth * math.log2(1.0 + tx_power * channel_gain_pow / noise_power)


def tx_latency(model_size_bits: float, rate: float) -> float:
    """Seconds to upload the model weights at the given rate."""
    if rate <= 0:
        raise ValueError("rate must be > 0")
    if model_size_bits < 0:
        raise ValueError("model_size_bits must be >= 0")
    return model_size_bits / rate


def local_energy(profile: DeviceProfile, state: DeviceState, eta: float, epochs: int,
                 include_epoch_factor: bool = True) -> float:
    """Training energy in joules; quadratic in the operating frequency.

    With `include_epoch_factor` the energy is charged once per local epoch,
    matching the work counted by :func:`local_latency`. Without it a single
    pass is charged regardless of `epochs`.
    """
    if eta <= 0 or state.base_freq <= 0:
        raise ValueError("eta and base_freq must be > 0")
    energy = profile.chip_coeff * profile.cycles_per_sample * profile.dataset_size \
        * (eta * state.base_freq) ** 2
    if include_epoch_factor:
        energy *= epochs
    return energy


def tx_energy(tx_power: float, tx_latency_s: float) -> float:
    """Upload energy in joules: transmit power times upload time."""
    if tx_power < 0 or tx_latency_s < 0:
        raise ValueError("tx_power and tx_latency_s must be >= 0")
    return tx_power * tx_latency_s


def check_action(action: AllocationAction, config: SystemConfig) -> None:
    """Raise ValueError unless the action satisfies the allocation constraints."""
    m = config.num_devices
    if len(action.freq_scale) != m or len(action.bandwidth) != m:
        raise ValueError(f"action length mismatch: expected {m} devices")
    eps = 1e-12
    for eta in action.freq_scale:
        if not (config.eta_min - eps <= eta <= 1.0 + eps):
            raise ValueError(f"freq_scale {eta} outside [{config.eta_min}, 1]")
    floor_slack = 1e-9 * config.total_bandwidth
    for b in action.bandwidth:
        if b < config.bandwidth_floor - floor_slack:
            raise ValueError(f"bandwidth {b} below floor {config.bandwidth_floor}")
    total = math.fsum(action.bandwidth)
    if abs(total - config.total_bandwidth) > 1e-9 * config.total_bandwidth:
        raise ValueError(f"bandwidth sums to {total}, expected {config.total_bandwidth}")


def evaluate_round(profiles, states, action: AllocationAction, config: SystemConfig) -> RoundOutcome:
    """Evaluate one round for the whole fleet. Pure: `states` are not mutated."""
    if len(profiles) != len(states):
        raise ValueError("profiles and states must have the same length")
    if len(profiles) != config.num_devices:
        raise ValueError("fleet size does not match config.num_devices")
    check_action(action, config)

    e = config.local_epochs
    t_loc, t_up, t_tot, e_loc, e_up, e_tot = [], [], [], [], [], []
    for prof, st, eta, bw in zip(profiles, states, action.freq_scale, action.bandwidth):
        tl = local_latency(prof, st, eta, e)
        rate = tx_rate(bw, prof.tx_power, st.channel_gain_pow, config.noise_power)
        tu = tx_latency(config.model_size_bits, rate)
        el = local_energy(prof, st, eta, e, config.epoch_energy_factor)
        eu = tx_energy(prof.tx_power, tu)
        t_loc.append(tl)
        t_up.append(tu)
        t_tot.append(tl + tu)
        e_loc.append(el)
        e_up.append(eu)
        e_tot.append(el + eu)

    latency = max(t_tot)
    bottleneck = t_tot.index(latency)  # first max: lowest device index on ties
    energy = math.fsum(e_tot)
    lam = config.lambda_tradeoff
    cost = lam * latency + (1.0 - lam) * energy
    return RoundOutcome(t_local=t_loc, t_up=t_up, t_total=t_tot,
                        e_local=e_loc, e_up=e_up, e_total=e_tot,
                        system_latency=latency, total_energy=energy,
                        instant_cost=cost, bottleneck=bottleneck)
