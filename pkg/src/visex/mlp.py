"""Small dense networks with hand-written backprop.

Everything runs in float64 so analytic gradients can be checked against
central finite differences at tight tolerances. Parameters live in plain
numpy arrays and serialize to JSON (widths + flattened values), which keeps
checkpoints diffable and loads deterministic.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError


class MLP:
    """Fully connected net, ReLU on hidden layers, linear output.

    widths = (input, hidden..., output). An MLP with widths (d, out) is a
    plain affine map.
    """

    def __init__(self, widths: Sequence[int], rng: np.random.Generator | int | None = None,
                 weight_scale: float | None = None):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ValidationError(f"bad widths {widths}: need >=2 positive entries")
        self.widths = widths
        if isinstance(rng, (int, np.integer)) or rng is None:
            rng = np.random.default_rng(rng)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            # He-style scaling unless an explicit scale is requested
            scale = weight_scale if weight_scale is not None else np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def zero_like_grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params]

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cache(x)
        return out

    def forward_cache(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping post-activation values for backprop."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.widths[0]:
            raise ValidationError(
                f"input width {x.shape[1]} does not match net input {self.widths[0]}"
            )
        activations = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.maximum(h, 0.0)
            activations.append(h)
        out = h[0] if squeeze else h
        return out, activations

    def backward(self, activations: list[np.ndarray], dout: np.ndarray
                 ) -> tuple[np.ndarray, list[np.ndarray]]:
        """Backprop dout through the cached forward pass.

        Returns (gradient w.r.t. input, gradients aligned with self.params).
        ReLU uses the zero subgradient at the kink.
        """
        dout = np.asarray(dout, dtype=np.float64)
        if dout.ndim == 1:
            dout = dout[None, :]
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = activations[i]
            grads[2 * i] = a_prev.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (activations[i] > 0.0)
        return delta, grads

    # -- flat-vector interface (finite differences, checkpoints) --

    def pack(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def unpack(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        needed = self.n_params
        if flat.size != needed:
            raise ValidationError(
                f"flat vector has {flat.size} entries, net needs {needed}"
            )
        offset = 0
        for p in self.params:
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MLP":
        clone = MLP(self.widths, rng=0)
        clone.unpack(self.pack())
        return clone

    def scale_params(self, factor: float) -> None:
        for p in self.params:
            p *= factor

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "params": [float(v) for v in self.pack()]}

    @classmethod
    def from_dict(cls, payload: dict) -> "MLP":
        net = cls(payload["widths"], rng=0)
        net.unpack(np.asarray(payload["params"], dtype=np.float64))
        return net


class SGD:
    """Plain gradient descent, kept around for gradient-test simplicity."""

    def __init__(self, lr: float):
        self.lr = float(lr)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    """Adaptive moment estimation with the standard bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return SGD(lr)
    raise ValidationError(f"unknown optimizer {name!r}")


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                       step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function on a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        bump = np.zeros_like(x)
        bump[i] = step
        grad[i] = (f(x + bump) - f(x - bump)) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-based relative error between two gradient vectors."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)
