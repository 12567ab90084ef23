import math

import numpy as np
import pytest

from feelsim.simcore import (AllocationAction, DeviceProfile, DeviceState,
                             SystemConfig, check_action, evaluate_round,
                             local_energy, local_latency, tx_energy, tx_latency,
                             tx_rate)
from reference_model import reference_round


def make_profile(**kw):
    base = dict(id=0, cycles_per_sample=1.35e5, dataset_size=500.0,
                chip_coeff=1.5e-22, tx_power=5e-5, battery_capacity=2.5e4,
                base_freq_init=3e7)
    base.update(kw)
    return DeviceProfile(**base)


def make_state(profile, gain=1.0):
    return DeviceState(battery_remaining=profile.battery_capacity,
                       base_freq=profile.base_freq_init, channel_gain_pow=gain)


def midpoint_config(m=20):
    return SystemConfig(num_devices=m, max_rounds=1000, local_epochs=5,
                        total_bandwidth=5e6, model_size_bits=8e7,
                        noise_power=1e-9, lambda_tradeoff=0.5)


class TestLocalLatency:
    def test_hand_value(self):
        prof = make_profile(cycles_per_sample=1e5, base_freq_init=3e7)
        t = local_latency(prof, make_state(prof), eta=1.0, epochs=5)
        assert t == pytest.approx(25.0 / 3.0, rel=1e-12)

    def test_midpoint_value(self):
        prof = make_profile()
        assert local_latency(prof, make_state(prof), 1.0, 5) == pytest.approx(11.25, rel=1e-12)

    def test_inverse_in_eta(self):
        prof = make_profile()
        st = make_state(prof)
        assert local_latency(prof, st, 0.5, 5) == pytest.approx(
            2.0 * local_latency(prof, st, 1.0, 5), rel=1e-12)

    def test_domain_errors(self):
        prof = make_profile()
        st = make_state(prof)
        with pytest.raises(ValueError):
            local_latency(prof, st, 0.0, 5)
        with pytest.raises(ValueError):
            local_latency(prof, st, -0.1, 5)


class TestTxRate:
    def test_hand_value(self):
        # B=2.5e5, P=5e-5, |h|^2=1, sigma^2=1e-9 -> 2.5e5 * log2(1 + 5e4)
        assert tx_rate(2.5e5, 5e-5, 1.0, 1e-9) == pytest.approx(3902417.3320122734, rel=1e-12)

    def test_zero_gain_limit(self):
        assert tx_rate(2.5e5, 5e-5, 0.0, 1e-9) == 0.0

    def test_linear_in_bandwidth(self):
        r1 = tx_rate(1e5, 5e-5, 0.7, 1e-9)
        r2 = tx_rate(2e5, 5e-5, 0.7, 1e-9)
        assert r2 == pytest.approx(2.0 * r1, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            tx_rate(0.0, 5e-5, 1.0, 1e-9)
        with pytest.raises(ValueError):
            tx_rate(1e5, 5e-5, 1.0, 0.0)


class TestTxLatency:
    def test_hand_value(self):
        rate = tx_rate(2.5e5, 5e-5, 1.0, 1e-9)
        assert tx_latency(8e7, rate) == pytest.approx(20.500113953406455, rel=1e-12)

    def test_fast_link(self):
        assert tx_latency(8e7, 1e30) < 1e-20

    def test_zero_payload(self):
        assert tx_latency(0.0, 1e6) == 0.0

    def test_domain_error(self):
        with pytest.raises(ValueError):
            tx_latency(8e7, 0.0)


class TestLocalEnergy:
    def test_hand_values(self):
        prof = make_profile()
        st = make_state(prof)
        single = local_energy(prof, st, 1.0, 5, include_epoch_factor=False)
        assert single == pytest.approx(9.1125, rel=1e-12)
        assert local_energy(prof, st, 1.0, 5) == pytest.approx(45.5625, rel=1e-12)

    def test_quadratic_in_eta(self):
        prof = make_profile()
        st = make_state(prof)
        assert local_energy(prof, st, 0.5, 5) == pytest.approx(
            0.25 * local_energy(prof, st, 1.0, 5), rel=1e-12)

    def test_domain_error(self):
        prof = make_profile()
        with pytest.raises(ValueError):
            local_energy(prof, make_state(prof), 0.0, 5)


class TestTxEnergy:
    def test_hand_value(self):
        rate = tx_rate(2.5e5, 5e-5, 1.0, 1e-9)
        t = tx_latency(8e7, rate)
        assert tx_energy(5e-5, t) == pytest.approx(1.0250056976703228e-3, rel=1e-12)

    def test_zero_time(self):
        assert tx_energy(5e-5, 0.0) == 0.0

    def test_linear_in_power(self):
        assert tx_energy(1e-4, 3.0) == pytest.approx(2 * tx_energy(5e-5, 3.0), rel=1e-12)


def even_action(config):
    m = config.num_devices
    return AllocationAction(freq_scale=[1.0] * m,
                            bandwidth=[config.total_bandwidth / m] * m)


class TestEvaluateRound:
    def test_singleton_latency(self):
        cfg = midpoint_config(m=1)
        prof = make_profile()
        out = evaluate_round([prof], [make_state(prof)], even_action(cfg), cfg)
        assert out.system_latency == out.t_total[0]
        assert out.bottleneck == 0

    def test_slower_device_is_bottleneck(self):
        cfg = midpoint_config(m=2)
        profs = [make_profile(id=0), make_profile(id=1)]
        states = [make_state(p) for p in profs]
        action = AllocationAction(freq_scale=[1.0, 0.5],
                                  bandwidth=[2.5e6, 2.5e6])
        out = evaluate_round(profs, states, action, cfg)
        assert out.bottleneck == 1
        assert out.system_latency == out.t_total[1]

    def test_golden_fixture(self):
        # 20 identical devices at the distribution midpoints, even bandwidth,
        # eta=1, lambda=0.5; expected value computed by hand from the rate,
        # latency and energy definitions.
        cfg = midpoint_config()
        profs = [make_profile(id=i) for i in range(20)]
        states = [make_state(p) for p in profs]
        out = evaluate_round(profs, states, even_action(cfg), cfg)
        assert out.system_latency == pytest.approx(31.750113953406455, rel=1e-12)
        assert out.total_energy == pytest.approx(911.2705001139533, rel=1e-12)
        assert out.instant_cost == pytest.approx(471.51030703367985, rel=1e-12)

    def test_outcome_identities(self):
        cfg = midpoint_config(m=3)
        rng = np.random.default_rng(3)
        profs = [make_profile(id=i, base_freq_init=rng.uniform(1e7, 5e7)) for i in range(3)]
        states = [make_state(p, gain=rng.exponential(1.0) + 1e-3) for p in profs]
        action = AllocationAction(freq_scale=[0.3, 0.9, 0.6],
                                  bandwidth=[1e6, 1.5e6, 2.5e6])
        out = evaluate_round(profs, states, action, cfg)
        for m in range(3):
            assert out.t_total[m] == out.t_local[m] + out.t_up[m]
            assert out.e_total[m] == out.e_local[m] + out.e_up[m]
        assert out.system_latency == max(out.t_total)
        lam = cfg.lambda_tradeoff
        assert out.instant_cost == pytest.approx(
            lam * out.system_latency + (1 - lam) * out.total_energy, rel=1e-15)

    def test_purity_and_no_mutation(self):
        cfg = midpoint_config(m=2)
        profs = [make_profile(id=i) for i in range(2)]
        states = [make_state(p, gain=0.4) for p in profs]
        before = [(s.battery_remaining, s.base_freq, s.channel_gain_pow) for s in states]
        a = evaluate_round(profs, states, even_action(cfg), cfg)
        b = evaluate_round(profs, states, even_action(cfg), cfg)
        assert a == b  # bit-identical dataclasses
        assert [(s.battery_remaining, s.base_freq, s.channel_gain_pow) for s in states] == before

    def test_permutation_invariance(self):
        cfg = midpoint_config(m=6)
        rng = np.random.default_rng(11)
        profs = [make_profile(id=i, cycles_per_sample=rng.uniform(7e4, 2e5),
                              base_freq_init=rng.uniform(1e7, 5e7)) for i in range(6)]
        states = [make_state(p, gain=rng.exponential(1.0) + 1e-3) for p in profs]
        eta = rng.uniform(0.05, 1.0, 6)
        bw = rng.uniform(1.0, 2.0, 6)
        bw = bw / bw.sum() * cfg.total_bandwidth
        out = evaluate_round(profs, states, AllocationAction(list(eta), list(bw)), cfg)
        perm = rng.permutation(6)
        out_p = evaluate_round([profs[i] for i in perm], [states[i] for i in perm],
                               AllocationAction([eta[i] for i in perm],
                                                [bw[i] for i in perm]), cfg)
        assert out_p.system_latency == out.system_latency
        assert out_p.total_energy == out.total_energy

    def test_dimension_mismatch(self):
        cfg = midpoint_config(m=2)
        profs = [make_profile(id=i) for i in range(2)]
        states = [make_state(p) for p in profs]
        with pytest.raises(ValueError):
            evaluate_round(profs[:1], states, even_action(cfg), cfg)
        with pytest.raises(ValueError):
            evaluate_round(profs, states, AllocationAction([1.0], [5e6]), cfg)


class TestActionConstraints:
    def test_bandwidth_sum_tolerance(self):
        cfg = midpoint_config(m=2)
        ok = AllocationAction([1.0, 1.0], [2.5e6, 2.5e6 * (1 + 1e-10)])
        check_action(ok, cfg)
        bad = AllocationAction([1.0, 1.0], [2.5e6, 2.6e6])
        with pytest.raises(ValueError):
            check_action(bad, cfg)

    def test_eta_bounds(self):
        cfg = midpoint_config(m=1)
        with pytest.raises(ValueError):
            check_action(AllocationAction([0.01], [5e6]), cfg)
        with pytest.raises(ValueError):
            check_action(AllocationAction([1.2], [5e6]), cfg)

    def test_bandwidth_floor(self):
        cfg = midpoint_config(m=2)
        with pytest.raises(ValueError):
            check_action(AllocationAction([1.0, 1.0], [4e3, 5e6 - 4e3]), cfg)


class TestEnergyLatencyTradeoff:
    def test_eta_direction(self):
        # raising eta always lowers training latency and raises training energy
        rng = np.random.default_rng(5)
        for _ in range(200):
            prof = make_profile(cycles_per_sample=rng.uniform(7e4, 2e5),
                                dataset_size=rng.uniform(400, 600),
                                chip_coeff=rng.uniform(1e-22, 2e-22),
                                base_freq_init=rng.uniform(1e7, 5e7))
            st = make_state(prof)
            lo, hi = sorted(rng.uniform(0.05, 1.0, 2))
            if lo == hi:
                continue
            assert local_latency(prof, st, hi, 5) < local_latency(prof, st, lo, 5)
            assert local_energy(prof, st, hi, 5) > local_energy(prof, st, lo, 5)


class TestAgainstReference:
    def test_random_instances(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            m = int(rng.integers(1, 9))
            cfg = SystemConfig(num_devices=m,
                               max_rounds=int(rng.integers(1, 2000)),
                               local_epochs=int(rng.integers(1, 9)),
                               total_bandwidth=float(rng.uniform(1e6, 9e6)),
                               model_size_bits=float(rng.uniform(1e6, 1e8)),
                               noise_power=float(rng.uniform(1e-10, 1e-8)),
                               lambda_tradeoff=float(rng.uniform(0, 1)),
                               epoch_energy_factor=bool(rng.integers(0, 2)))
            profs, states, devices = [], [], []
            for i in range(m):
                p = make_profile(id=i,
                                 cycles_per_sample=rng.uniform(7e4, 2e5),
                                 dataset_size=rng.uniform(400, 600),
                                 chip_coeff=rng.uniform(1e-22, 2e-22),
                                 tx_power=rng.uniform(1e-5, 1e-4),
                                 base_freq_init=rng.uniform(1e7, 5e7))
                s = DeviceState(battery_remaining=rng.uniform(2e4, 3e4),
                                base_freq=rng.uniform(1e7, 5e7),
                                channel_gain_pow=max(rng.exponential(1.0), 1e-3))
                profs.append(p)
                states.append(s)
                devices.append(dict(cycles=p.cycles_per_sample, samples=p.dataset_size,
                                    chip=p.chip_coeff, power=p.tx_power,
                                    freq=s.base_freq, gain=s.channel_gain_pow))
            eta = rng.uniform(cfg.eta_min, 1.0, m)
            raw = rng.uniform(0.5, 2.0, m)
            bw = raw / raw.sum() * cfg.total_bandwidth
            action = AllocationAction(list(eta), list(bw))
            out = evaluate_round(profs, states, action, cfg)
            ref = reference_round(devices, eta, bw, cfg.local_epochs,
                                  cfg.model_size_bits, cfg.noise_power,
                                  cfg.lambda_tradeoff, cfg.epoch_energy_factor)
            assert out.system_latency == pytest.approx(ref["latency"], rel=1e-12)
            assert out.total_energy == pytest.approx(ref["energy"], rel=1e-12)
            assert out.instant_cost == pytest.approx(ref["cost"], rel=1e-12)
            for i in range(m):
                assert out.t_total[i] == pytest.approx(ref["per_device"][i]["time"], rel=1e-12)
                assert out.e_total[i] == pytest.approx(ref["per_device"][i]["energy"], rel=1e-12)
