import numpy as np
import pytest

from feelsim.fedavg import (ClientDataset, GlobalModel, aggregate, client_gradient,
                            global_loss, local_update, make_synthetic_clients,
                            run_fedavg)


def one_dim_client(slope=2.0, n=8):
    x = np.linspace(1.0, 2.0, n)[:, None]
    return ClientDataset(features=x, labels=slope * x[:, 0])


class TestLocalUpdate:
    def test_zero_learning_rate(self):
        model = GlobalModel(weights=np.array([0.3]))
        w = local_update(model, one_dim_client(), alpha=0.0, epochs=5)
        assert np.array_equal(w, model.weights)

    def test_monotone_approach_to_slope(self):
        data = one_dim_client(slope=2.0)
        w = np.array([0.0])
        gaps = [abs(w[0] - 2.0)]
        for _ in range(30):
            w = local_update(GlobalModel(weights=w), data, alpha=0.05, epochs=1)
            gaps.append(abs(w[0] - 2.0))
        assert all(a > b for a, b in zip(gaps, gaps[1:]))

    def test_optimum_is_fixed_point(self):
        data = one_dim_client(slope=2.0)
        w_star = np.array([2.0])  # exact noiseless optimum
        assert np.allclose(client_gradient(w_star, data), 0.0)
        w = local_update(GlobalModel(weights=w_star), data, alpha=0.1, epochs=7)
        assert np.array_equal(w, w_star)

    def test_divergence_guard(self):
        data = one_dim_client()
        with pytest.raises(RuntimeError):
            local_update(GlobalModel(weights=np.array([1.0])), data,
                         alpha=10.0, epochs=500)


class TestAggregate:
    def test_weighted_mean_example(self):
        merged = aggregate([(np.array([0.0]), 1), (np.array([1.0]), 3)])
        assert merged.weights[0] == pytest.approx(0.75, abs=0)

    def test_identical_locals(self):
        w = np.array([0.5, -1.5])
        merged = aggregate([(w, 4), (w.copy(), 9)])
        assert np.allclose(merged.weights, w)

    def test_permutation_bit_identical(self):
        rng = np.random.default_rng(0)
        locals_ = [(rng.normal(size=6), int(rng.integers(1, 50))) for _ in range(7)]
        a = aggregate(locals_).weights
        b = aggregate(list(reversed(locals_))).weights
        c = aggregate([locals_[i] for i in rng.permutation(7)]).weights
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)

    def test_affine_equivariance(self):
        rng = np.random.default_rng(1)
        locals_ = [(rng.normal(size=4), int(rng.integers(1, 20))) for _ in range(5)]
        base = aggregate(locals_).weights
        c, shift = 2.5, -0.75
        mapped = aggregate([(c * w + shift, n) for w, n in locals_]).weights
        assert np.allclose(mapped, c * base + shift, rtol=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            aggregate([])
        with pytest.raises(ValueError):
            aggregate([(np.zeros(2), 1), (np.zeros(3), 1)])
        with pytest.raises(ValueError):
            aggregate([(np.zeros(2), 0)])


class TestGlobalLoss:
    def test_perfect_fit_is_zero(self):
        clients, w_true = make_synthetic_clients(5, 3, seed=2)
        assert global_loss(GlobalModel(weights=w_true), clients) == pytest.approx(0.0, abs=1e-24)

    def test_non_negative(self):
        rng = np.random.default_rng(3)
        clients, _ = make_synthetic_clients(4, 3, seed=3)
        for _ in range(20):
            assert global_loss(GlobalModel(weights=rng.normal(size=3)), clients) >= 0.0


class TestFedAvgProtocol:
    def test_single_client_equals_gradient_descent(self):
        clients, _ = make_synthetic_clients(1, 4, seed=4)
        data = clients[0]
        rounds, epochs, alpha = 9, 3, 0.03
        model, _ = run_fedavg(clients, rounds, alpha, epochs)
        # plain gradient descent, same step order
        w = np.zeros(4)
        for _ in range(rounds * epochs):
            w = w - alpha * client_gradient(w, data)
        assert np.array_equal(model.weights, w)

    def test_loss_non_increasing_at_small_step(self):
        clients, _ = make_synthetic_clients(6, 4, seed=5)
        stacked = np.vstack([c.features for c in clients])
        lipschitz = float(np.linalg.eigvalsh(stacked.T @ stacked / len(stacked)).max())
        _, losses = run_fedavg(clients, rounds=40, alpha=1e-3 / lipschitz, epochs=5)
        assert all(a >= b for a, b in zip(losses, losses[1:]))

    def test_twenty_client_convergence_to_oracle(self):
        clients, _ = make_synthetic_clients(20, 5, seed=6)
        model, losses = run_fedavg(clients, rounds=100, alpha=0.05, epochs=5)
        assert losses[-1] < 1e-3 * losses[0]
        # independent oracle: exact least squares on the pooled data
        x = np.vstack([c.features for c in clients])
        y = np.concatenate([c.labels for c in clients])
        w_star, *_ = np.linalg.lstsq(x, y, rcond=None)
        assert np.max(np.abs(model.weights - w_star)) < 1e-6

    def test_loss_history_length(self):
        clients, _ = make_synthetic_clients(3, 2, seed=7)
        _, losses = run_fedavg(clients, rounds=11, alpha=0.02, epochs=2)
        assert len(losses) == 12


class TestClientDataset:
    def test_validation(self):
        with pytest.raises(ValueError):
            ClientDataset(features=np.zeros((3, 2)), labels=np.zeros(4))
        with pytest.raises(ValueError):
            ClientDataset(features=np.zeros((0, 2)), labels=np.zeros(0))
