"""Small feedforward networks with manual backprop, plus optimizers and
finite-difference gradient checking used across the KPI and policy code."""

from __future__ import annotations

import numpy as np


class Mlp:
    """Fully connected net, tanh hidden layers, linear output.

    Forward keeps the activation stack so backward can run without
    recomputation. All arrays are float64 for checkable gradients.
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for d_in, d_out in zip(sizes, sizes[1:]):
            scale = np.sqrt(1.0 / d_in)
            self.weights.append(rng.normal(0.0, scale, size=(d_in, d_out)))
            self.biases.append(np.zeros(d_out))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (output, activations); x is (batch, d_in)."""
        acts = [np.asarray(x, dtype=np.float64)]
        h = acts[0]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        return h, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(
        self, acts: list[np.ndarray], grad_out: np.ndarray
    ) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
        """Backprop dL/d(output) through the stored activations.

        Returns (dL/dx, weight grads, bias grads), summed over the batch.
        """
        grad_w = [np.empty(0)] * len(self.weights)
        grad_b = [np.empty(0)] * len(self.biases)
        delta = np.asarray(grad_out, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                delta = delta * (1.0 - acts[i + 1] ** 2)  # tanh'
            grad_w[i] = acts[i].T @ delta
            grad_b[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        return delta, grad_w, grad_b

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def to_lists(self) -> dict:
        return {
            "sizes": self.sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_lists(cls, doc: dict) -> "Mlp":
        net = cls(doc["sizes"], np.random.default_rng(0))
        net.weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
        net.biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
        return net


class Sgd:
    def __init__(self, params: list[np.ndarray], lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: list[np.ndarray]) -> None:
        for p, g in zip(self.params, grads):
            p -= self.lr * g


class Adam:
    def __init__(
        self,
        params: list[np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# --- gradient checking ------------------------------------------------------


def finite_difference_grads(
    loss_fn, params: list[np.ndarray], step: float = 1e-5
) -> list[np.ndarray]:
    """Central differences of loss_fn() w.r.t. each element of params.

    loss_fn must read the (mutated in place) params on every call.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            hi = loss_fn()
            flat_p[i] = orig - step
            lo = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(
    analytic: list[np.ndarray], numeric: list[np.ndarray], floor: float = 1e-4
) -> float:
    """Worst elementwise |a-n| / max(|a|, |n|, floor) over all arrays.

    The floor turns the test absolute below `floor`, which keeps
    finite-difference noise on near-zero entries from dominating.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v
