"""Episodic environment for battery-constrained federated edge training.

One episode runs a fleet from full batteries until either every scheduled
round is paid for or some device can no longer afford its share of a round.
Between rounds the base CPU frequencies jitter around their initial values
and the uplink channels are redrawn, so conditions are static within a
round and time-varying across rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import substream
from .simcore import (AllocationAction, DeviceProfile, DeviceState, RoundOutcome,
                      SystemConfig, evaluate_round)

BATTERY_EXHAUSTED = "battery_exhausted"
MAX_ROUNDS_REACHED = "max_rounds_reached"


@dataclass
class FleetSpec:
    """Uniform sampling bounds for device constants; tx_power is shared."""

    battery: tuple = (2e4, 3e4)
    base_freq: tuple = (1e7, 5e7)
    cycles_per_sample: tuple = (7e4, 2e5)
    dataset_size: tuple = (400.0, 600.0)
    chip_coeff: tuple = (1e-22, 2e-22)
    tx_power: float = 5e-5

    def __post_init__(self):
        for name in ("battery", "base_freq", "cycles_per_sample", "dataset_size", "chip_coeff"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"FleetSpec.{name} bounds must satisfy 0 < lo <= hi")
        if self.tx_power <= 0:
            raise ValueError("FleetSpec.tx_power must be > 0")


def sample_fleet(spec: FleetSpec, num_devices: int, rng: np.random.Generator):
    """Draw a fleet of device profiles from the spec bounds."""
    profiles = []
    for i in range(num_devices):
        profiles.append(DeviceProfile(
            id=i,
            battery_capacity=float(rng.uniform(*spec.battery)),
            base_freq_init=float(rng.uniform(*spec.base_freq)),
            cycles_per_sample=float(rng.uniform(*spec.cycles_per_sample)),
            dataset_size=float(rng.uniform(*spec.dataset_size)),
            chip_coeff=float(rng.uniform(*spec.chip_coeff)),
            tx_power=spec.tx_power,
        ))
    return profiles


@dataclass
class Observation:
    """Normalized snapshot fed to the policy: round progress plus per-device
    batteries, base frequencies and channel gains."""

    round_frac: float
    batteries: np.ndarray
    base_freqs: np.ndarray
    channel_gains: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.round_frac], self.batteries,
                               self.base_freqs, self.channel_gains))

    def __len__(self):
        return 1 + 3 * len(self.batteries)


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    reason: str | None
    outcome: RoundOutcome  # for a battery_exhausted step: the unpaid attempt


class FeelEnv:
    """The training-campaign MDP.

    Construct with either a `fleet_spec` (profiles are resampled on every
    reset from the reset seed) or explicit `profiles` (kept fixed across
    resets, so repeated episodes optimize one concrete fleet).
    """

    def __init__(self, config: SystemConfig, fleet_spec: FleetSpec | None = None,
                 profiles=None, seed: int = 0):
        if (fleet_spec is None) == (profiles is None):
            raise ValueError("provide exactly one of fleet_spec or profiles")
        if profiles is not None and len(profiles) != config.num_devices:
            raise ValueError("profiles length must equal config.num_devices")
        self.config = config
        self.fleet_spec = fleet_spec
        self.profiles = list(profiles) if profiles is not None else None
        self.states = None
        self._rng = None
        self._round = 0
        self._paid_rounds = 0
        self._done = True
        self._freq_norm = None
        self.reset(seed)

    def reset(self, seed: int = 0) -> Observation:
        """Start a new episode: full batteries, initial frequencies, fresh
        channels. With a fleet spec the fleet itself is redrawn from `seed`."""
        if self.fleet_spec is not None:
            self.profiles = sample_fleet(self.fleet_spec, self.config.num_devices,
                                         substream(seed, "fleet"))
        self._rng = substream(seed, "dynamics")
        gains = self._draw_channel_gains()
        self.states = [DeviceState(battery_remaining=p.battery_capacity,
                                   base_freq=p.base_freq_init,
                                   channel_gain_pow=g)
                       for p, g in zip(self.profiles, gains)]
        self._round = 1
        self._paid_rounds = 0
        self._done = False
        # normalization constants are pinned to the fleet's initial values
        self._freq_norm = max(p.base_freq_init for p in self.profiles)
        return self.observe()

    def observe(self) -> Observation:
        cfg = self.config
        clip = cfg.channel_clip
        return Observation(
            round_frac=self._round / cfg.max_rounds,
            batteries=np.array([s.battery_remaining / p.battery_capacity
                                for p, s in zip(self.profiles, self.states)]),
            base_freqs=np.array([s.base_freq / self._freq_norm for s in self.states]),
            channel_gains=np.array([min(s.channel_gain_pow, clip) / clip
                                    for s in self.states]),
        )

    def step(self, action: AllocationAction) -> StepResult:
        """Attempt the current round.

        The round only counts (and batteries only drain) if every device can
        pay its energy share; otherwise the episode ends immediately and the
        attempted round is reported unpaid with reward 0.
        """
        if self._done:
            raise RuntimeError("step() called on a finished episode; reset() first")
        outcome = evaluate_round(self.profiles, self.states, action, self.config)

        affordable = all(s.battery_remaining >= e
                         for s, e in zip(self.states, outcome.e_total))
        if not affordable:
            self._done = True
            return StepResult(observation=self.observe(), reward=0.0, done=True,
                              reason=BATTERY_EXHAUSTED, outcome=outcome)

        for s, e in zip(self.states, outcome.e_total):
            s.battery_remaining -= e
        reward = self._round - self.config.reward_cost_scale * outcome.instant_cost
        self._paid_rounds += 1
        self._round += 1
        reason = None
        if self._round > self.config.max_rounds:
            self._done = True
            reason = MAX_ROUNDS_REACHED
        self._advance_dynamics()
        return StepResult(observation=self.observe(), reward=reward,
                          done=self._done, reason=reason, outcome=outcome)

    def rounds_completed(self) -> int:
        """Rounds fully paid for in the current episode."""
        return self._paid_rounds

    @property
    def done(self) -> bool:
        return self._done

    def _advance_dynamics(self):
        lo, hi = self.config.freq_jitter_range
        jitter = self._rng.uniform(lo, hi, size=len(self.profiles))
        gains = self._draw_channel_gains()
        for s, p, j, g in zip(self.states, self.profiles, jitter, gains):
            s.base_freq = p.base_freq_init * j
            s.channel_gain_pow = g

    def _draw_channel_gains(self):
        # Rayleigh fading with unit average power gain; floored so upload
        # latency stays bounded.
        draws = self._rng.exponential(1.0, size=self.config.num_devices)
        return np.maximum(draws, self.config.channel_gain_floor)


def trace_columns(num_devices: int):
    """Column names of one episode-trace CSV row."""
    cols = ["episode", "round"]
    for tag in ("eta", "bandwidth", "t_local", "t_up", "e_local", "e_up"):
        cols += [f"{tag}_{m}" for m in range(num_devices)]
    cols += ["system_latency", "total_energy", "instant_cost", "reward"]
    cols += [f"battery_{m}" for m in range(num_devices)]
    return cols


def trace_row(episode: int, round_idx: int, action: AllocationAction,
              outcome: RoundOutcome, reward: float, batteries):
    row = [episode, round_idx]
    row += list(action.freq_scale) + list(action.bandwidth)
    row += list(outcome.t_local) + list(outcome.t_up)
    row += list(outcome.e_local) + list(outcome.e_up)
    row += [outcome.system_latency, outcome.total_energy, outcome.instant_cost, reward]
    row += list(batteries)
    return row
