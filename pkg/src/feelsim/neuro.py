"""Small feed-forward networks with hand-written reverse-mode gradients.

Exactly what the actor/critic pair needs: a stack of ReLU hidden layers
followed by one linear output layer split into activation "heads"
(identity, sigmoid or softmax slices). Parameters are exposed as one flat
float64 vector so target networks can be blended elementwise.

Shapes: `forward` accepts a single input vector or a (batch, dim) matrix.
`backward` returns parameter gradients summed over the batch plus the
gradient with respect to the inputs, which the policy update needs to pull
value gradients back through the actor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HEAD_ACTIVATIONS = ("identity", "sigmoid", "softmax")
CHECKPOINT_FORMAT = 1


def _sigmoid(z):
    # branch on the sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class AdamConfig:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stability: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")


class MlpNet:
    """ReLU MLP with per-head output activations and flat parameter access."""

    def __init__(self, input_dim, hidden, heads):
        if input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        for width, act in heads:
            if act not in HEAD_ACTIVATIONS:
                raise ValueError(f"unknown head activation {act!r}")
            if width < 1:
                raise ValueError("head width must be >= 1")
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.heads = tuple((int(w), act) for w, act in heads)
        out = sum(w for w, _ in self.heads)
        self.layer_sizes = [self.input_dim, *self.hidden, out]
        self.weights = [np.zeros((self.layer_sizes[i], self.layer_sizes[i + 1]))
                        for i in range(len(self.layer_sizes) - 1)]
        self.biases = [np.zeros(n) for n in self.layer_sizes[1:]]
        self.adam_m = np.zeros(self.param_count)
        self.adam_v = np.zeros(self.param_count)
        self.adam_t = 0

    @property
    def param_count(self):
        return sum((self.layer_sizes[i] + 1) * self.layer_sizes[i + 1]
                   for i in range(len(self.layer_sizes) - 1))

    def _head_slices(self):
        slices, start = [], 0
        for width, act in self.heads:
            slices.append((slice(start, start + width), act))
            start += width
        return slices

    def get_params(self) -> np.ndarray:
        """Flat copy of all weights and biases, layer by layer (W then b)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got {flat.shape}")
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos:pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos:pos + b.size].copy()
            pos += b.size

    def head_inputs(self, x) -> np.ndarray:
        """Pre-activation values of the output layer (exploration noise is
        injected here before the head activations squash the ranges)."""
        x, squeeze = self._as_batch(x)
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        z = a @ self.weights[-1] + self.biases[-1]
        return z[0] if squeeze else z

    def apply_heads(self, z) -> np.ndarray:
        z, squeeze = self._as_batch(z, dim=self.layer_sizes[-1])
        out = np.empty_like(z)
        for sl, act in self._head_slices():
            if act == "identity":
                out[:, sl] = z[:, sl]
            elif act == "sigmoid":
                out[:, sl] = _sigmoid(z[:, sl])
            else:
                shifted = z[:, sl] - z[:, sl].max(axis=1, keepdims=True)
                e = np.exp(shifted)
                out[:, sl] = e / e.sum(axis=1, keepdims=True)
        return out[0] if squeeze else out

    def forward(self, x) -> np.ndarray:
        return self.apply_heads(self.head_inputs(x))

    def backward(self, x, output_grad):
        """Gradients of sum_i L_i given dL/d(output); forward is recomputed.

        Returns (flat parameter gradient summed over the batch, per-sample
        input gradient). Layout matches :meth:`get_params`.
        """
        x, squeeze = self._as_batch(x)
        g, gsq = self._as_batch(output_grad, dim=self.layer_sizes[-1])
        if squeeze != gsq or x.shape[0] != g.shape[0]:
            raise ValueError("input and output_grad batch shapes disagree")

        acts = [x]  # post-activation value entering each layer
        pre = []
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w + b
            pre.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        z_out = a @ self.weights[-1] + self.biases[-1]

        # chain through the head activations
        y = self.apply_heads(z_out)
        dz = np.empty_like(g)
        for sl, act in self._head_slices():
            if act == "identity":
                dz[:, sl] = g[:, sl]
            elif act == "sigmoid":
                s = y[:, sl]
                dz[:, sl] = g[:, sl] * s * (1.0 - s)
            else:
                s = y[:, sl]
                inner = (g[:, sl] * s).sum(axis=1, keepdims=True)
                dz[:, sl] = s * (g[:, sl] - inner)

        w_grads = [None] * len(self.weights)
        b_grads = [None] * len(self.biases)
        w_grads[-1] = acts[-1].T @ dz
        b_grads[-1] = dz.sum(axis=0)
        da = dz @ self.weights[-1].T
        for i in range(len(self.weights) - 2, -1, -1):
            dz = da * (pre[i] > 0)
            w_grads[i] = acts[i].T @ dz
            b_grads[i] = dz.sum(axis=0)
            da = dz @ self.weights[i].T

        flat = np.concatenate([np.concatenate([wg.ravel(), bg])
                               for wg, bg in zip(w_grads, b_grads)])
        return flat, (da[0] if squeeze else da)

    def clone(self) -> "MlpNet":
        other = MlpNet(self.input_dim, self.hidden, self.heads)
        other.set_params(self.get_params())
        return other

    def same_architecture(self, other: "MlpNet") -> bool:
        return (self.input_dim == other.input_dim and self.hidden == other.hidden
                and self.heads == other.heads)

    def save(self, prefix) -> None:
        """Write `<prefix>.bin` (little-endian float64 blob) and `<prefix>.json`."""
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        params = self.get_params().astype("<f8")
        prefix.with_suffix(".bin").write_bytes(params.tobytes())
        sidecar = {
            "format": CHECKPOINT_FORMAT,
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "heads": [[w, act] for w, act in self.heads],
        }
        prefix.with_suffix(".json").write_text(json.dumps(sidecar, indent=1) + "\n")

    @classmethod
    def load(cls, prefix) -> "MlpNet":
        prefix = Path(prefix)
        sidecar = json.loads(prefix.with_suffix(".json").read_text())
        if sidecar.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {sidecar.get('format')}")
        net = cls(sidecar["input_dim"], sidecar["hidden"],
                  [(w, act) for w, act in sidecar["heads"]])
        blob = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
        net.set_params(blob.astype(np.float64))
        return net

    def _as_batch(self, x, dim=None):
        x = np.asarray(x, dtype=np.float64)
        dim = self.input_dim if dim is None else dim
        if x.ndim == 1:
            if x.shape[0] != dim:
                raise ValueError(f"expected vector of length {dim}, got {x.shape}")
            return x[None, :], True
        if x.ndim == 2:
            if x.shape[1] != dim:
                raise ValueError(f"expected (batch, {dim}), got {x.shape}")
            return x, False
        raise ValueError("inputs must be 1-D or 2-D")


def init_params(net: MlpNet, seed: int) -> MlpNet:
    """Uniform fan-in initialisation, zero biases, fresh Adam state."""
    rng = np.random.default_rng(seed)
    for i, w in enumerate(net.weights):
        bound = 1.0 / np.sqrt(w.shape[0])
        net.weights[i] = rng.uniform(-bound, bound, size=w.shape)
        net.biases[i] = np.zeros(w.shape[1])
    net.adam_m = np.zeros(net.param_count)
    net.adam_v = np.zeros(net.param_count)
    net.adam_t = 0
    return net


def adam_step(net: MlpNet, grads, config: AdamConfig) -> MlpNet:
    """One Adam update (with bias correction) on the flat parameter vector."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != (net.param_count,):
        raise ValueError(f"expected gradient of length {net.param_count}")
    net.adam_t += 1
    net.adam_m = config.beta1 * net.adam_m + (1 - config.beta1) * grads
    net.adam_v = config.beta2 * net.adam_v + (1 - config.beta2) * grads ** 2
    m_hat = net.adam_m / (1 - config.beta1 ** net.adam_t)
    v_hat = net.adam_v / (1 - config.beta2 ** net.adam_t)
    params = net.get_params() - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon_stability)
    net.set_params(params)
    return net


def soft_update(target: MlpNet, main: MlpNet, tau: float) -> MlpNet:
    """Blend target parameters toward the main network: tau*main + (1-tau)*target."""
    if not target.same_architecture(main):
        raise ValueError("soft_update requires identical architectures")
    target.set_params(tau * main.get_params() + (1.0 - tau) * target.get_params())
    return target
