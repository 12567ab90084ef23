"""Reference federated averaging on a convex synthetic task.

The resource simulator abstracts the learned model to a weight size; this
module keeps the actual federated mechanics honest on a problem where the
optimum is known exactly: linear least squares. Clients run full-batch
gradient steps locally and the server aggregates a sample-weighted average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIVERGENCE_LIMIT = 1e6


@dataclass
class ClientDataset:
    features: np.ndarray  # (n_m, d)
    labels: np.ndarray    # (n_m,)

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be (n, d), labels (n,)")
        if len(self.features) != len(self.labels) or len(self.labels) < 1:
            raise ValueError("features/labels lengths disagree or are empty")

    @property
    def num_samples(self) -> int:
        return len(self.labels)


@dataclass
class GlobalModel:
    weights: np.ndarray
    round_index: int = 0


def client_loss(weights, data: ClientDataset) -> float:
    r = data.features @ weights - data.labels
    return 0.5 * float(r @ r) / data.num_samples


def client_gradient(weights, data: ClientDataset) -> np.ndarray:
    r = data.features @ weights - data.labels
    return data.features.T @ r / data.num_samples


def local_update(model: GlobalModel, data: ClientDataset, alpha: float, epochs: int) -> np.ndarray:
    """Run `epochs` full-batch gradient steps from the global weights."""
    if alpha < 0:
        raise ValueError("learning rate must be >= 0")
    w = model.weights.copy()
    for _ in range(epochs):
        w = w - alpha * client_gradient(w, data)
        if np.linalg.norm(w) > DIVERGENCE_LIMIT:
            raise RuntimeError("local update diverged; lower the learning rate")
    return w


def aggregate(local_weights, round_index: int = 0) -> GlobalModel:
    """Sample-weighted average of client weights.

    `local_weights` is a list of (weights, num_samples). Each coordinate is
    combined with an exactly rounded sum, so the result does not depend on
    client order."""
    if not local_weights:
        raise ValueError("nothing to aggregate")
    dim = len(local_weights[0][0])
    total = sum(n for _, n in local_weights)
    if total <= 0:
        raise ValueError("total sample count must be > 0")
    for w, _ in local_weights:
        if len(w) != dim:
            raise ValueError("client weight dimensions disagree")
    merged = np.array([math.fsum((n / total) * w[j] for w, n in local_weights)
                       for j in range(dim)])
    return GlobalModel(weights=merged, round_index=round_index)


def global_loss(model: GlobalModel, datasets) -> float:
    """Unweighted mean of the client losses."""
    return math.fsum(client_loss(model.weights, d) for d in datasets) / len(datasets)


def make_synthetic_clients(num_clients: int, dim: int, samples_range=(20, 50),
                           seed: int = 0, noise_std: float = 0.0):
    """IID Gaussian features with a shared ground-truth weight vector.

    With zero label noise every client shares the same exact optimum, which
    is what makes the convergence tests sharp."""
    rng = np.random.default_rng(seed)
    w_true = rng.normal(size=dim)
    clients = []
    for _ in range(num_clients):
        n = int(rng.integers(samples_range[0], samples_range[1] + 1))
        x = rng.normal(size=(n, dim))
        y = x @ w_true
        if noise_std > 0:
            y = y + rng.normal(scale=noise_std, size=n)
        clients.append(ClientDataset(features=x, labels=y))
    return clients, w_true


def run_fedavg(clients, rounds: int, alpha: float, epochs: int):
    """Drive the whole protocol; returns the final model and per-round losses.

    The loss history has `rounds + 1` entries, starting at the zero model."""
    dim = clients[0].features.shape[1]
    model = GlobalModel(weights=np.zeros(dim), round_index=0)
    losses = [global_loss(model, clients)]
    for k in range(1, rounds + 1):
        locals_ = [(local_update(model, c, alpha, epochs), c.num_samples) for c in clients]
        model = aggregate(locals_, round_index=k)
        losses.append(global_loss(model, clients))
    return model, losses
